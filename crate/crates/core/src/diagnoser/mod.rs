//! SQL parsing and error-taxonomy classification of wrong predictions.

pub mod analysis;
pub mod ast;
mod classify;
mod lexer;
mod parser;
mod render;

pub use ast::SqlAst;
pub use classify::{classify_error, error_distribution, Category, ErrorDistribution, ErrorLabel, Subtype};
pub use parser::parse_sql;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message} at byte {position}")]
pub struct ParseError {
    pub message: String,
    pub position: usize,
}

impl ParseError {
    pub fn new(message: impl Into<String>, position: usize) -> Self {
        ParseError {
            message: message.into(),
            position,
        }
    }
}

/// Renders a tree back to canonical single-spaced SQL.
pub fn render(ast: &SqlAst) -> String {
    ast.to_string()
}
