use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, EvoError>;

#[derive(Debug, Error)]
pub enum EvoError {
    /// Invalid parameters or configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input file does not match its declared layout.
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    /// Dataset failed invariant checks.
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    /// Optimizer or metric produced a non-finite or degenerate value.
    #[error("numeric failure in {module}: {message}")]
    Numeric { module: &'static str, message: String },

    #[error("cancelled at optimization iteration {0}")]
    Cancelled(usize),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl EvoError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        EvoError::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EvoError::Io {
            path: path.into(),
            source,
        }
    }
}
