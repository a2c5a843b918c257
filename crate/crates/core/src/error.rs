use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("kernel row for (x={x}, a={a}) is not a probability vector (sum {sum}, min {min})")]
    KernelNotStochastic { x: usize, a: usize, sum: f64, min: f64 },

    #[error("reward at (x={x}, a={a}) is not finite ({value})")]
    NonFiniteReward { x: usize, a: usize, value: f64 },

    #[error("no convergence: {context} (best residual {best_residual:e})")]
    NoConvergence { context: String, best_residual: f64 },

    #[error("{} grid point(s) failed to converge; first at stage {:?}, z = {:?}", .failures.len(), .failures[0].0, .failures[0].1)]
    Unconverged { failures: Vec<(Option<usize>, Vec<f64>)> },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
