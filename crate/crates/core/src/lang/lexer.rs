use crate::error::{Error, Result};
use crate::lang::ast::Span;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Num(f64),
    Str(String),
    LBracket,
    RBracket,
    LParen,
    RParen,
    Semi,
    Colon,
    Comma,
    DotDot,
    Prime,
    Arrow,
    FdArrow,
    Plus,
    Minus,
    Star,
    Slash,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Not,
    Implies,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Int(i) => format!("number {i}"),
            Tok::Num(x) => format!("number {x}"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Eof => "end of file".into(),
            other => format!("'{}'", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::Comma => ",",
            Tok::DotDot => "..",
            Tok::Prime => "'",
            Tok::Arrow => "->",
            Tok::FdArrow => "--",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Eq => "=",
            Tok::Ne => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::And => "&",
            Tok::Or => "|",
            Tok::Not => "!",
            Tok::Implies => "=>",
            _ => "?",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

fn syntax(span: Span, message: impl Into<String>) -> Error {
    Error::Syntax {
        line: span.line,
        column: span.column,
        message: message.into(),
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, column: col };
        let peek = chars.get(i + 1).copied();
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && peek == Some('/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut real = false;
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                real = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    real = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            if real {
                Tok::Num(text.parse().map_err(|_| syntax(span, format!("bad number {text}")))?)
            } else {
                match text.parse::<i64>() {
                    Ok(v) => Tok::Int(v),
                    Err(_) => Tok::Num(text.parse().map_err(|_| syntax(span, format!("bad number {text}")))?),
                }
            }
        } else if c == '"' {
            i += 1;
            while i < chars.len() && chars[i] != '"' && chars[i] != '\n' {
                i += 1;
            }
            if chars.get(i) != Some(&'"') {
                return Err(syntax(span, "unterminated string"));
            }
            i += 1;
            Tok::Str(chars[start + 1..i - 1].iter().collect())
        } else {
            let two = |a: char, b: char| c == a && peek == Some(b);
            let (tok, len) = if two('-', '>') {
                (Tok::Arrow, 2)
            } else if two('-', '-') {
                (Tok::FdArrow, 2)
            } else if two('.', '.') {
                (Tok::DotDot, 2)
            } else if two('!', '=') {
                (Tok::Ne, 2)
            } else if two('<', '=') {
                (Tok::Le, 2)
            } else if two('>', '=') {
                (Tok::Ge, 2)
            } else if two('=', '>') {
                (Tok::Implies, 2)
            } else {
                let t = match c {
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ';' => Tok::Semi,
                    ':' => Tok::Colon,
                    ',' => Tok::Comma,
                    '\'' => Tok::Prime,
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '*' => Tok::Star,
                    '/' => Tok::Slash,
                    '=' => Tok::Eq,
                    '<' => Tok::Lt,
                    '>' => Tok::Gt,
                    '&' => Tok::And,
                    '|' => Tok::Or,
                    '!' => Tok::Not,
                    _ => return Err(syntax(span, format!("unexpected character '{c}'"))),
                };
                (t, 1)
            };
            i += len;
            tok
        };
        col += i - start;
        out.push(Token { tok, span });
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span { line, column: col },
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn fd_arrow_splits_around_event_name() {
        assert_eq!(
            toks("s=1 --f-> 0.3"),
            vec![
                Tok::Ident("s".into()),
                Tok::Eq,
                Tok::Int(1),
                Tok::FdArrow,
                Tok::Ident("f".into()),
                Tok::Arrow,
                Tok::Num(0.3),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn numbers_and_ranges() {
        assert_eq!(toks("[0..2]")[1..4], [Tok::Int(0), Tok::DotDot, Tok::Int(2)]);
        assert_eq!(toks("1e-7 2.5E+3 7")[..3], [Tok::Num(1e-7), Tok::Num(2500.0), Tok::Int(7)]);
    }

    #[test]
    fn positions_and_comments() {
        let t = tokenize("// header\n  mode").unwrap();
        assert_eq!(t[0].span, Span { line: 2, column: 3 });
        let err = tokenize("a\n  #").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 2, column: 3, .. }));
    }
}
