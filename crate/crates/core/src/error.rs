use std::fmt;

use crate::orthopoly::PolyFamily;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure of a single model evaluation, tagged with the physical node.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalFailure {
    pub model: String,
    pub node: Vec<f64>,
    pub reason: String,
}

impl fmt::Display for EvalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "model `{}` failed at [", self.model)?;
        for (i, x) in self.node.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{x:e}")?;
        }
        write!(f, "]: {}", self.reason)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid variable `{name}`: {reason}")]
    InvalidVariable { name: String, reason: String },

    #[error("{family:?} Gauss rule with {points} points did not converge")]
    QuadratureNoConvergence { family: PolyFamily, points: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid multi-fidelity configuration: {0}")]
    InvalidMfConfig(String),

    #[error(transparent)]
    Eval(#[from] EvalFailure),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl std::error::Error for EvalFailure {}

impl Error {
    /// Whether the error signals a numerically degenerate input (zero variance,
    /// undefined correlation) rather than bad configuration or a model failure.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::Degenerate(_))
    }
}
