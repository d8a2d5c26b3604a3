use thiserror::Error;

/// Failures reported by the solver library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid time window: {0}")]
    InvalidWindow(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("dense assembly of {unknowns} unknowns exceeds the limit of {limit}")]
    DenseTooLarge { unknowns: usize, limit: usize },

    #[error("matrix is numerically singular (pivot {pivot:.3e} at column {column})")]
    Singular { pivot: f64, column: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("problem has no {0} function")]
    MissingFunction(&'static str),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: u8,
        #[source]
        source: Box<Error>,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
