//! The `.cmp` text language: parsing, compilation to [`Program`], rendering,
//! and builtin benchmark generators.

mod ast;
pub mod bench;
mod compile;
mod parse;
mod render;

use thiserror::Error;

use crate::model::{ModelError, Program};

pub use ast::*;
pub use compile::compile;
pub use parse::parse;
pub use render::{isomorphic, render};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LangError {
    #[error("{pos}: syntax error: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("{pos}: duplicate declaration of `{name}`")]
    Duplicate { pos: Pos, name: String },
    #[error("{pos}: use of undeclared name `{name}`")]
    Undeclared { pos: Pos, name: String },
    #[error("{pos}: {msg}")]
    Index { pos: Pos, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Parses and compiles source text.
pub fn load(src: &str) -> Result<Program, LangError> {
    compile(&parse(src)?)
}
