//! Concrete text syntax: `.src` programs, `.vals` value files and printing
//! of target terms.

mod lexer;
mod parser;
mod printer;

pub use parser::{parse_program, parse_term, parse_type, parse_value, parse_values, unannotated};
pub use printer::{print_program, print_pretty, print_term};

/// A parse failure with a one-based source position.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("syntax error at {line}:{col}: expected {expected}")]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub expected: String,
}
