use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field does not live on this grid (expected {expected} nodes, found {found})")]
    GridMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("potential rejected: {0}")]
    Potential(String),

    #[error("linear solve failed: {0}")]
    Factorization(String),

    #[error("energy guard exhausted at t = {t}: step size {dt} fell below dt_min")]
    GuardAbort { t: f64, dt: f64 },

    #[error("newton iteration did not converge after {iters} iterations (residual {residual:e})")]
    NewtonDiverged { iters: usize, residual: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("right-hand side is outside the range of the operator (kernel component {residual:e})")]
    OutsideRange { residual: f64 },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("malformed input at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
