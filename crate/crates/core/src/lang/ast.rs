//! Syntax tree of a model file.

use std::fmt;

/// Position of a token in the source, both counted from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ast {
    pub constants: Vec<Constant>,
    pub modules: Vec<Module>,
    pub labels: Vec<Label>,
    pub rewards: Vec<RewardBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstType {
    Int,
    Double,
    Bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constant {
    pub name: String,
    pub ty: Option<ConstType>,
    pub value: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Module {
    pub name: String,
    pub fdelays: Vec<FdDeclaration>,
    pub variables: Vec<Variable>,
    pub commands: Vec<Command>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdDeclaration {
    pub name: String,
    pub delay: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub low: Expr,
    pub high: Expr,
    pub init: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trigger {
    Exponential,
    Fd(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub label: Option<String>,
    pub guard: Expr,
    pub trigger: Trigger,
    pub updates: Vec<Update>,
    pub span: Span,
}

/// `weight : (x'=e) & (y'=e)`; the weight is a rate for exponential
/// commands and a probability for fd commands.
#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub weight: Expr,
    pub assignments: Vec<(String, Expr)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Label {
    pub name: String,
    pub guard: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardBlock {
    pub name: Option<String>,
    pub items: Vec<RewardItem>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RewardKind {
    /// Accrued per time unit in states satisfying the guard.
    Rate,
    /// Collected on transitions of commands with this synchronization label
    /// (`None` for unlabeled commands) leaving states satisfying the guard.
    Impulse(Option<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardItem {
    pub kind: RewardKind,
    pub guard: Expr,
    pub value: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Or,
    And,
    Implies,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Function {
    Min,
    Max,
    Floor,
    Ceil,
    Mod,
}

impl Function {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "min" => Function::Min,
            "max" => Function::Max,
            "floor" => Function::Floor,
            "ceil" => Function::Ceil,
            "mod" => Function::Mod,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    Num(f64),
    Bool(bool),
    Ident(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Call(Function, Vec<Expr>),
}
