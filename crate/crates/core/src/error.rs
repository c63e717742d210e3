use thiserror::Error;

/// Errors raised by lattice operations. Indices reported here are 1-based.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TodaError {
    #[error("index k={k} out of range 1..={n}")]
    IndexOutOfRange { k: usize, n: usize },
    #[error("length mismatch: {what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("non-finite entry in {what} at k={k}")]
    NonFinite { what: &'static str, k: usize },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("integration diverged at substep {substep}")]
    Divergence { substep: usize },
    #[error("real branch of the map does not exist: g_{k} = {value} <= 0")]
    NonPositiveBranch { k: usize, value: f64 },
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("zero denominator in superposition formula at k={k}")]
    ZeroDenominator { k: usize },
    #[error("operation unsupported for {0} boundary")]
    UnsupportedBoundary(&'static str),
    #[error("composition {order} failed: {source}")]
    CompositionFailed {
        order: &'static str,
        #[source]
        source: Box<TodaError>,
    },
}

impl TodaError {
    /// True for errors that signal a missing real branch of a Bäcklund step.
    pub fn is_branch_failure(&self) -> bool {
        match self {
            TodaError::NonPositiveBranch { .. } | TodaError::NewtonDiverged { .. } => true,
            TodaError::CompositionFailed { source, .. } => source.is_branch_failure(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, TodaError>;
