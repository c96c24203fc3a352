//! The equation language: lexer, parser, pretty-printer and lowering.

pub mod ast;
pub mod lex;
pub mod lower;
pub mod parse;
pub mod print;

pub use ast::DslModel;
pub use lower::lower_to_automaton;
pub use parse::{parse_dsl, parse_expr, parse_guard};
pub use print::pretty;

use crate::diag::FrontResult;
use crate::model::Model;

/// Parse and lower in one go.
pub fn load_dsl(text: &str) -> FrontResult<Model> {
    lower_to_automaton(&parse_dsl(text)?)
}
