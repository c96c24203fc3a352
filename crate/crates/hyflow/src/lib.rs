//! Model loading, benchmark registry, flowpipe output and the command-line
//! driver built on `hyflow_core`.

pub mod bench;
pub mod cli;
pub mod diag;
pub mod dsl;
pub mod json_model;
pub mod model;
pub mod output;

pub use diag::{FrontendError, Span};
pub use model::{Model, PlotHint};
