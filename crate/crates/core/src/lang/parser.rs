use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::lang::ast::*;
use crate::lang::lexer::{tokenize, Tok, Token};

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

fn error_at(span: Span, message: impl Into<String>) -> Error {
    Error::Syntax {
        line: span.line,
        column: span.column,
        message: message.into(),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.tokens[(self.pos + k).min(self.tokens.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn unexpected(&self, wanted: &str) -> Error {
        error_at(self.span(), format!("expected {wanted}, found {}", self.peek().describe()))
    }

    fn expect(&mut self, tok: Tok) -> Result<Span> {
        if self.peek() == &tok {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<Span> {
        if self.is_keyword(kw) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&format!("keyword {kw}")))
        }
    }

    fn ident(&mut self) -> Result<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_reserved(&s) => {
                let span = self.bump().span;
                Ok((s, span))
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn file(&mut self) -> Result<Ast> {
        self.expect_keyword("fdctmc")?;
        let mut ast = Ast::default();
        loop {
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Ident(kw) => match kw.as_str() {
                    "const" => ast.constants.push(self.constant()?),
                    "module" => ast.modules.push(self.module()?),
                    "label" => ast.labels.push(self.label()?),
                    "rewards" => ast.rewards.push(self.rewards()?),
                    _ => return Err(self.unexpected("const, module, label or rewards")),
                },
                _ => return Err(self.unexpected("const, module, label or rewards")),
            }
        }
        check_duplicates(&ast)?;
        Ok(ast)
    }

    fn constant(&mut self) -> Result<Constant> {
        let span = self.expect_keyword("const")?;
        let ty = match self.peek() {
            Tok::Ident(s) if s == "int" => Some(ConstType::Int),
            Tok::Ident(s) if s == "double" => Some(ConstType::Double),
            Tok::Ident(s) if s == "bool" => Some(ConstType::Bool),
            _ => None,
        };
        if ty.is_some() {
            self.bump();
        }
        let (name, _) = self.ident()?;
        self.expect(Tok::Eq)?;
        let value = self.expr()?;
        self.expect(Tok::Semi)?;
        Ok(Constant { name, ty, value, span })
    }

    fn module(&mut self) -> Result<Module> {
        let span = self.expect_keyword("module")?;
        let (name, _) = self.ident()?;
        let mut m = Module {
            name,
            fdelays: Vec::new(),
            variables: Vec::new(),
            commands: Vec::new(),
            span,
        };
        while self.is_keyword("fdelay") {
            let span = self.bump().span;
            let (name, _) = self.ident()?;
            self.expect(Tok::Eq)?;
            let delay = self.expr()?;
            self.expect(Tok::Semi)?;
            m.fdelays.push(FdDeclaration { name, delay, span });
        }
        loop {
            if self.is_keyword("endmodule") {
                self.bump();
                return Ok(m);
            }
            if self.is_keyword("fdelay") {
                return Err(error_at(
                    self.span(),
                    "fdelay declarations must come immediately after the module name",
                ));
            }
            match self.peek() {
                Tok::LBracket => m.commands.push(self.command()?),
                Tok::Ident(_) if self.peek_at(1) == &Tok::Colon => {
                    if !m.commands.is_empty() {
                        return Err(error_at(self.span(), "variables must be declared before commands"));
                    }
                    m.variables.push(self.variable()?)
                }
                _ => return Err(self.unexpected("variable, command or endmodule")),
            }
        }
    }

    fn variable(&mut self) -> Result<Variable> {
        let (name, span) = self.ident()?;
        self.expect(Tok::Colon)?;
        self.expect(Tok::LBracket)?;
        let low = self.expr()?;
        self.expect(Tok::DotDot)?;
        let high = self.expr()?;
        self.expect(Tok::RBracket)?;
        let init = if self.is_keyword("init") {
            self.bump();
            self.expr()?
        } else {
            low.clone()
        };
        self.expect(Tok::Semi)?;
        Ok(Variable {
            name,
            low,
            high,
            init,
            span,
        })
    }

    fn sync_label(&mut self) -> Result<Option<String>> {
        self.expect(Tok::LBracket)?;
        let label = match self.peek() {
            Tok::RBracket => None,
            _ => Some(self.ident()?.0),
        };
        self.expect(Tok::RBracket)?;
        Ok(label)
    }

    fn command(&mut self) -> Result<Command> {
        let span = self.span();
        let label = self.sync_label()?;
        let guard = self.expr()?;
        let trigger = if self.eat(&Tok::FdArrow) {
            let (event, _) = self.ident()?;
            self.expect(Tok::Arrow)?;
            Trigger::Fd(event)
        } else if self.eat(&Tok::Arrow) {
            Trigger::Exponential
        } else {
            return Err(self.unexpected("'->' or '--event->'"));
        };
        let mut updates = vec![self.update()?];
        while self.eat(&Tok::Plus) {
            updates.push(self.update()?);
        }
        self.expect(Tok::Semi)?;
        Ok(Command {
            label,
            guard,
            trigger,
            updates,
            span,
        })
    }

    fn starts_assignment(&self) -> bool {
        (self.peek() == &Tok::LParen && matches!(self.peek_at(1), Tok::Ident(_)) && self.peek_at(2) == &Tok::Prime)
            || self.is_keyword("true")
    }

    fn update(&mut self) -> Result<Update> {
        let weight = if self.starts_assignment() {
            Expr::Num(1.0)
        } else {
            let w = self.expr()?;
            self.expect(Tok::Colon)?;
            w
        };
        let mut assignments = Vec::new();
        if self.is_keyword("true") {
            self.bump();
        } else {
            loop {
                self.expect(Tok::LParen)?;
                let (var, _) = self.ident()?;
                self.expect(Tok::Prime)?;
                self.expect(Tok::Eq)?;
                let value = self.expr()?;
                self.expect(Tok::RParen)?;
                assignments.push((var, value));
                if !self.eat(&Tok::And) {
                    break;
                }
            }
        }
        Ok(Update { weight, assignments })
    }

    fn label(&mut self) -> Result<Label> {
        let span = self.expect_keyword("label")?;
        let name = match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                s
            }
            _ => return Err(self.unexpected("quoted label name")),
        };
        self.expect(Tok::Eq)?;
        let guard = self.expr()?;
        self.expect(Tok::Semi)?;
        Ok(Label { name, guard, span })
    }

    fn rewards(&mut self) -> Result<RewardBlock> {
        let span = self.expect_keyword("rewards")?;
        let name = match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Some(s)
            }
            _ => None,
        };
        let mut items = Vec::new();
        while !self.is_keyword("endrewards") {
            if self.peek() == &Tok::Eof {
                return Err(self.unexpected("endrewards"));
            }
            let span = self.span();
            let kind = if self.peek() == &Tok::LBracket {
                RewardKind::Impulse(self.sync_label()?)
            } else {
                RewardKind::Rate
            };
            let guard = self.expr()?;
            self.expect(Tok::Colon)?;
            let value = self.expr()?;
            self.expect(Tok::Semi)?;
            items.push(RewardItem {
                kind,
                guard,
                value,
                span,
            });
        }
        self.bump();
        Ok(RewardBlock { name, items, span })
    }

    fn expr(&mut self) -> Result<Expr> {
        self.implies()
    }

    fn implies(&mut self) -> Result<Expr> {
        let lhs = self.or()?;
        if self.eat(&Tok::Implies) {
            let rhs = self.implies()?;
            return Ok(Expr::Binary(BinaryOp::Implies, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Expr> {
        let mut lhs = self.and()?;
        while self.eat(&Tok::Or) {
            lhs = Expr::Binary(BinaryOp::Or, Box::new(lhs), Box::new(self.and()?));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr> {
        let mut lhs = self.not()?;
        while self.eat(&Tok::And) {
            lhs = Expr::Binary(BinaryOp::And, Box::new(lhs), Box::new(self.not()?));
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Expr> {
        if self.eat(&Tok::Not) {
            return Ok(Expr::Unary(UnaryOp::Not, Box::new(self.not()?)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Tok::Eq => BinaryOp::Eq,
            Tok::Ne => BinaryOp::Ne,
            Tok::Lt => BinaryOp::Lt,
            Tok::Le => BinaryOp::Le,
            Tok::Gt => BinaryOp::Gt,
            Tok::Ge => BinaryOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.additive()?;
        Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs)))
    }

    fn additive(&mut self) -> Result<Expr> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(self.multiplicative()?));
        }
    }

    fn multiplicative(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(&Tok::Minus) {
            return Ok(match self.unary()? {
                Expr::Int(i) => Expr::Int(-i),
                Expr::Num(x) => Expr::Num(-x),
                e => Expr::Unary(UnaryOp::Neg, Box::new(e)),
            });
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(Expr::Int(i))
            }
            Tok::Num(x) => {
                self.bump();
                Ok(Expr::Num(x))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                Ok(Expr::Bool(s == "true"))
            }
            Tok::Ident(s) if self.peek_at(1) == &Tok::LParen && Function::from_name(&s).is_some() => {
                self.bump();
                self.bump();
                let mut args = vec![self.expr()?];
                while self.eat(&Tok::Comma) {
                    args.push(self.expr()?);
                }
                self.expect(Tok::RParen)?;
                let f = Function::from_name(&s).expect("checked above");
                let arity_ok = match f {
                    Function::Floor | Function::Ceil => args.len() == 1,
                    Function::Mod => args.len() == 2,
                    Function::Min | Function::Max => !args.is_empty(),
                };
                if !arity_ok {
                    return Err(error_at(span, format!("wrong number of arguments to {s}")));
                }
                Ok(Expr::Call(f, args))
            }
            Tok::Ident(s) if !is_reserved(&s) => {
                self.bump();
                Ok(Expr::Ident(s))
            }
            _ => Err(self.unexpected("expression")),
        }
    }
}

fn is_reserved(s: &str) -> bool {
    matches!(
        s,
        "fdctmc"
            | "ctmc"
            | "const"
            | "module"
            | "endmodule"
            | "fdelay"
            | "label"
            | "rewards"
            | "endrewards"
            | "init"
            | "true"
            | "false"
            | "int"
            | "double"
            | "bool"
    )
}

fn check_duplicates(ast: &Ast) -> Result<()> {
    let mut names = HashSet::new();
    let mut events = HashSet::new();
    for c in &ast.constants {
        if !names.insert(c.name.clone()) {
            return Err(error_at(c.span, format!("duplicate declaration of {}", c.name)));
        }
    }
    let mut modules = HashSet::new();
    for m in &ast.modules {
        if !modules.insert(m.name.clone()) {
            return Err(error_at(m.span, format!("duplicate module {}", m.name)));
        }
        for v in &m.variables {
            if !names.insert(v.name.clone()) {
                return Err(error_at(v.span, format!("duplicate declaration of {}", v.name)));
            }
        }
        for f in &m.fdelays {
            if !events.insert(f.name.clone()) {
                return Err(error_at(f.span, format!("duplicate fd event {}", f.name)));
            }
        }
    }
    let mut labels = HashSet::new();
    for l in &ast.labels {
        if !labels.insert(l.name.clone()) {
            return Err(error_at(l.span, format!("duplicate label \"{}\"", l.name)));
        }
    }
    Ok(())
}

/// Parses a model file into its syntax tree.
pub fn parse(source: &str) -> Result<Ast> {
    let tokens = tokenize(source)?;
    Parser { tokens, pos: 0 }.file()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fdelay_declaration() {
        let ast = parse("fdctmc module m fdelay f = 1.0; s : [0..2] init 0; endmodule").unwrap();
        let m = &ast.modules[0];
        assert_eq!(m.fdelays[0].name, "f");
        assert_eq!(m.fdelays[0].delay, Expr::Num(1.0));
        assert_eq!(m.variables[0].name, "s");
    }

    #[test]
    fn target_label() {
        let ast = parse("fdctmc label \"target\" = s=2;").unwrap();
        assert_eq!(ast.labels[0].name, "target");
        assert_eq!(
            ast.labels[0].guard,
            Expr::Binary(BinaryOp::Eq, Box::new(Expr::Ident("s".into())), Box::new(Expr::Int(2)))
        );
    }

    #[test]
    fn header_is_required() {
        let err = parse("ctmc module m endmodule").unwrap_err();
        assert!(err.to_string().contains("expected keyword fdctmc"), "{err}");
        assert!(matches!(err, Error::Syntax { line: 1, column: 1, .. }));
    }

    #[test]
    fn fd_command_with_two_branches() {
        let ast = parse(
            "fdctmc module m fdelay f = 1.0; s : [0..2] init 0;
             [L] s=1 --f-> 0.3:(s'=0) + 0.7:(s'=2);
             endmodule",
        )
        .unwrap();
        let c = &ast.modules[0].commands[0];
        assert_eq!(c.label.as_deref(), Some("L"));
        assert_eq!(c.trigger, Trigger::Fd("f".into()));
        assert_eq!(c.updates.len(), 2);
        assert_eq!(c.updates[1].weight, Expr::Num(0.7));
    }

    #[test]
    fn updates_with_arithmetic_and_conjunction() {
        let ast = parse(
            "fdctmc const double r = 1.39; module m q : [0..3] init 0; b : [0..1];
             [] q<3 & b=0 -> r*2 : (q'=q+1) & (b'=1) + r+1 : (q'=max(q-1,0)) ;
             [] q=3 -> (q'=0);
             endmodule",
        )
        .unwrap();
        let cs = &ast.modules[0].commands;
        assert_eq!(cs[0].updates.len(), 2);
        assert_eq!(cs[0].updates[0].assignments.len(), 2);
        assert_eq!(cs[1].updates[0].weight, Expr::Num(1.0));
    }

    #[test]
    fn rewards_block() {
        let ast = parse("fdctmc rewards [L] true : 1.0; s=0 : 0.5; [] s=1 : 2; endrewards").unwrap();
        let items = &ast.rewards[0].items;
        assert_eq!(items[0].kind, RewardKind::Impulse(Some("L".into())));
        assert_eq!(items[1].kind, RewardKind::Rate);
        assert_eq!(items[2].kind, RewardKind::Impulse(None));
    }

    #[test]
    fn duplicates_are_rejected() {
        let err = parse("fdctmc module a x : [0..1]; endmodule module b x : [0..1]; endmodule").unwrap_err();
        assert!(err.to_string().contains("duplicate declaration of x"), "{err}");
        let err = parse("fdctmc module a fdelay f = 1; fdelay f = 2; endmodule").unwrap_err();
        assert!(err.to_string().contains("duplicate fd event f"));
    }

    #[test]
    fn errors_carry_positions() {
        let err = parse("fdctmc\nmodule m\n  s : [0..2 init 0;\nendmodule").unwrap_err();
        match err {
            Error::Syntax { line, column, message } => {
                assert_eq!((line, column), (3, 13));
                assert!(message.contains("expected '..'") || message.contains("expected ']'"), "{message}");
            }
            e => panic!("{e}"),
        }
    }
}
