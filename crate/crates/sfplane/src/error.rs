//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate row {index}: l2 norm below 1e-300")]
    DegenerateRow { index: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sample count mismatch: {left} vs {right}")]
    SampleCountMismatch { left: usize, right: usize },

    #[error("absolute continuity violated: p has mass on a symbol with zero probability under q")]
    AbsoluteContinuity,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("not a descent direction: g.d = {0}")]
    NotDescentDirection(f64),

    #[error("line search found no step satisfying the strong Wolfe conditions")]
    LineSearchFailed,

    #[error("non-finite value at iteration {iteration}: {context}")]
    Numerical { iteration: usize, context: String },

    #[error("repetition {repetition} failed: {source}")]
    RunFailed {
        repetition: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
