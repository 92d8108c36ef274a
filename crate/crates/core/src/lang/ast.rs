//! Syntax tree of the `.cmp` language.

use std::fmt;

use crate::model::{BinOp, UnOp};

/// A 1-based source position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ast {
    pub globals: Vec<GlobalDecl>,
    pub locks: Vec<LockDecl>,
    pub processes: Vec<ProcessAst>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalDecl {
    pub name: String,
    pub size: Option<u32>,
    pub init: Vec<i64>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LockDecl {
    pub name: String,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProcessAst {
    pub name: String,
    pub params: Vec<(String, i64)>,
    pub body: Body,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Body {
    Block(Vec<Stmt>),
    Cfg(CfgAst),
}

/// An explicit control-flow graph body.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CfgAst {
    pub nodes: u32,
    pub root: u32,
    pub edges: Vec<CfgEdgeAst>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CfgEdgeAst {
    pub src: u32,
    pub dst: u32,
    pub label: EdgeLabelAst,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EdgeLabelAst {
    Read { target: String, loc: LocAst },
    Write { loc: LocAst, value: ExprAst },
    Acquire(String),
    Release(String),
    Assign { target: String, value: ExprAst },
    When(ExprAst),
    Fail(u32, ExprAst),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocAst {
    pub var: String,
    pub index: Option<ExprAst>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stmt {
    Read {
        declare: bool,
        target: String,
        loc: LocAst,
        pos: Pos,
    },
    Assign {
        declare: bool,
        target: String,
        value: ExprAst,
        pos: Pos,
    },
    Write {
        loc: LocAst,
        value: ExprAst,
        pos: Pos,
    },
    Acquire(String, Pos),
    Release(String, Pos),
    If {
        cond: ExprAst,
        then: Vec<Stmt>,
        otherwise: Vec<Stmt>,
        pos: Pos,
    },
    Repeat {
        count: u32,
        body: Vec<Stmt>,
        pos: Pos,
    },
    Assert(ExprAst, Pos),
}

impl Stmt {
    /// Number of statements that compile to shared-memory events.
    pub fn visible_count(&self) -> usize {
        match self {
            Stmt::Read { .. } | Stmt::Write { .. } | Stmt::Acquire(..) | Stmt::Release(..) => 1,
            Stmt::Assign { .. } | Stmt::Assert(..) => 0,
            Stmt::If {
                then, otherwise, ..
            } => then.iter().chain(otherwise).map(Stmt::visible_count).sum(),
            Stmt::Repeat { body, .. } => body.iter().map(Stmt::visible_count).sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExprAst {
    Int(i64),
    Name(String, Pos),
    Unary(UnOp, Box<ExprAst>),
    Binary(BinOp, Box<ExprAst>, Box<ExprAst>),
}
