use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced by the toolkit.
///
/// Each variant maps onto one failure class; the CLI turns `Config` into a
/// usage failure and everything else into a data/numeric failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt payload: {0}")]
    Corruption(String),

    #[error("inconsistent data: {0}")]
    Consistency(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range for dimension {dim}")]
    Index { index: usize, dim: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {param}")]
    NonFinite { param: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("sample {sample_id} has no tokens left after masking")]
    EmptySample { sample_id: u64 },

    #[error("embedding lies inside the removal subspace (residual norm {norm:e})")]
    DegenerateEmbedding { norm: f64 },

    #[error("training aborted after {completed} of {requested} steps: batch stream exhausted")]
    TrainingAborted { completed: usize, requested: usize },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
