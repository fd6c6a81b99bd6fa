//! Compiler and reference interpreter for a subset of the BLOG modelling
//! language.

pub mod frontend;
pub mod interp;
pub mod analysis;
pub mod codegen;
pub mod corpus;
pub mod engine;
pub mod bench;
