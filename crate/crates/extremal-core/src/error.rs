use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("singular operator")]
    SingularOperator,
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("nonlinearity blow-up level reached")]
    BlowUp,
    #[error("monotonicity violation at iteration {iteration}: discretization breakdown")]
    MonotonicityViolation { iteration: usize },
    #[error("continuation stalled: step size underflow before any fold")]
    ContinuationStalled,
    #[error("branch does not contain the requested data: {0}")]
    BranchIncomplete(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
