//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes do not conform.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An argument violates an operation's precondition.
    #[error("argument error: {0}")]
    Argument(String),

    /// A numeric input is outside an operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An architecture description cannot be instantiated.
    #[error("spec error: {0}")]
    Spec(String),

    /// Min-max scaling is undefined (constant segment).
    #[error("scaling error: {0}")]
    Scaling(String),

    /// A forecast metric is undefined for the given inputs.
    #[error("metric error: {0}")]
    Metric(String),

    /// CSV ingestion failed; `line` is 1-based and counts the header.
    #[error("ingestion error at line {line}: {msg}")]
    Ingestion { line: usize, msg: String },

    /// A checkpoint is corrupt or from an incompatible version.
    #[error("format error: {0}")]
    Format(String),

    /// Every learning rate in the search grid diverged.
    #[error("search error: {0}")]
    Search(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
