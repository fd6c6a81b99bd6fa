//! Lexing, parsing, printing and validation of model files.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod printer;
pub mod typed;

use std::fmt;

use thiserror::Error;

pub use ast::Program;
pub use typed::{validate, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FrontError {
    #[error("lexical error at {pos}: {msg}")]
    Lex { pos: Pos, msg: String },
    #[error("syntax error at {pos}: found {found}, expected {}", expected.join(" or "))]
    Syntax { pos: Pos, found: String, expected: Vec<String> },
    #[error("{kind} at {pos}: {msg}")]
    Semantic { kind: SemanticKind, pos: Pos, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemanticKind {
    Name,
    Type,
    Arity,
    Cycle,
    Unsupported,
}

impl fmt::Display for SemanticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SemanticKind::Name => "name-resolution error",
            SemanticKind::Type => "type error",
            SemanticKind::Arity => "arity error",
            SemanticKind::Cycle => "unconditional-cycle error",
            SemanticKind::Unsupported => "unsupported construct",
        })
    }
}

impl FrontError {
    pub(crate) fn lex(pos: Pos, msg: String) -> Self {
        FrontError::Lex { pos, msg }
    }

    pub(crate) fn sem(kind: SemanticKind, pos: Pos, msg: impl Into<String>) -> Self {
        FrontError::Semantic { kind, pos, msg: msg.into() }
    }

    pub fn pos(&self) -> Pos {
        match self {
            FrontError::Lex { pos, .. } | FrontError::Syntax { pos, .. } | FrontError::Semantic { pos, .. } => *pos,
        }
    }
}

/// Tokenize, parse and validate.
pub fn load(src: &str) -> Result<Model, FrontError> {
    let prog = parser::parse(&lexer::tokenize(src)?)?;
    validate(&prog)
}
