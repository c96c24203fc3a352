//! Artifact writers.

pub mod csv;
pub mod json;
pub mod svg;

pub use self::csv::emit_csv;
pub use self::json::{emit_json, report_value};
pub use self::svg::emit_svg;
