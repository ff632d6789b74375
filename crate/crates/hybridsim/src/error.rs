use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("rank-deficient input: column {col} norm {norm:.3e} below {threshold:.3e}")]
    RankDeficient {
        col: usize,
        norm: f64,
        threshold: f64,
    },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("subspace estimate needs {needed} Ritz pairs but only {available} iterations completed")]
    InsufficientDepth { needed: usize, available: usize },

    #[error("ill-conditioned combiner gram matrix (condition number {cond:.3e})")]
    SingularCombiner { cond: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("matvec oracle failed: {0}")]
    Oracle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
