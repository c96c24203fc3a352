use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("{func} is undefined on [{lo}, {hi}]")]
    Domain { func: &'static str, lo: f64, hi: f64 },
    #[error("division by an enclosure containing zero: [{lo}, {hi}]")]
    DivisionByZero { lo: f64, hi: f64 },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("unbound variable index {0}")]
    UnboundVariable(usize),
    #[error("derivative of a non-smooth term is undefined on [{lo}, {hi}]")]
    NonSmooth { lo: f64, hi: f64 },
    #[error("expression grew to {nodes} nodes, above the cap of {cap}; use a lower-order scheme")]
    ExpressionTooLarge { nodes: usize, cap: usize },
    #[error("integration failed at t = {t}: {reason} (step {h})")]
    StepFailure { t: f64, h: f64, reason: &'static str },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("model error: {0}")]
    Model(String),
    /// A branch stopped; the message explains why.
    #[error("{0}")]
    Aborted(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
