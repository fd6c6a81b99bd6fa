//! Untyped syntax tree. `case` never appears here: the parser rewrites it to
//! nested `if`.

use super::Pos;

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub decls: Vec<Decl>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistinctObj {
    Name(String),
    /// `Draw[3]` declares `Draw[0]`, `Draw[1]`, `Draw[2]`.
    Array(String, u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub ty: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decl {
    Type { name: String, pos: Pos },
    Distinct { ty: String, objs: Vec<DistinctObj>, pos: Pos },
    Number { ty: String, body: Expr, pos: Pos },
    Random { ret: String, name: String, params: Vec<Param>, body: Expr, pos: Pos },
    Fixed { ret: String, name: String, params: Vec<Param>, body: Expr, pos: Pos },
    Obs { lhs: Expr, rhs: Expr, pos: Pos },
    Query { expr: Expr, pos: Pos },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Or,
    And,
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

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "|",
            BinOp::And => "&",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn prec(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Bool(bool),
    Int(i64),
    Real(f64),
    /// Parameter, distinct object, or zero-argument function.
    Name(String),
    /// Function application or distribution call.
    Call(String, Vec<Expr>),
    /// Element of a distinct array, e.g. `Draw[2]`.
    Indexed(String, u32),
    /// `#T`
    Count(String),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    /// `UniformChoice({T t})`
    Choice { ty: String, var: String },
    /// `Categorical({k -> p, ...})`
    Categorical(Vec<(Expr, Expr)>),
}

impl Expr {
    pub fn new(kind: ExprKind, pos: Pos) -> Self {
        Expr { kind, pos }
    }

    fn erase(&mut self) {
        self.pos = Pos::default();
        match &mut self.kind {
            ExprKind::Call(_, args) => args.iter_mut().for_each(Expr::erase),
            ExprKind::If(a, b, c) => {
                a.erase();
                b.erase();
                c.erase();
            }
            ExprKind::Binary(_, a, b) => {
                a.erase();
                b.erase();
            }
            ExprKind::Unary(_, a) => a.erase(),
            ExprKind::Categorical(arms) => arms.iter_mut().for_each(|(k, p)| {
                k.erase();
                p.erase();
            }),
            _ => {}
        }
    }
}

impl Program {
    /// Copy with every source position reset, for structural comparison.
    pub fn without_positions(&self) -> Program {
        let mut p = self.clone();
        for d in &mut p.decls {
            match d {
                Decl::Type { pos, .. } | Decl::Distinct { pos, .. } => *pos = Pos::default(),
                Decl::Number { body, pos, .. } | Decl::Random { body, pos, .. } | Decl::Fixed { body, pos, .. } => {
                    *pos = Pos::default();
                    body.erase();
                }
                Decl::Obs { lhs, rhs, pos } => {
                    *pos = Pos::default();
                    lhs.erase();
                    rhs.erase();
                }
                Decl::Query { expr, pos } => {
                    *pos = Pos::default();
                    expr.erase();
                }
            }
        }
        p
    }
}
