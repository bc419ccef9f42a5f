use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("domain mismatch: expected length {expected}, got {got}")]
    DomainMismatch { expected: usize, got: usize },

    #[error("harmonic field is not Hermitian (relative violation {violation:.3e}); inverse transform is not real")]
    NonHermitian { violation: f64 },

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("operator not positive: {0}")]
    NotPositive(String),

    #[error("dense materialization of size {size} exceeds cap {cap}")]
    DenseCapExceeded { size: usize, cap: usize },

    #[error("spectrum diverges on-grid at mode {mode}: |f(k)| = 0")]
    SpectrumDiverges { mode: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("observation set is empty")]
    EmptyObservation,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
