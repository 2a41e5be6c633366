use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its constraint. `key` names the offending field.
    #[error("invalid configuration `{key}`: {constraint}")]
    Config { key: String, constraint: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value at index {index} in {context}")]
    NonFinite { context: &'static str, index: usize },

    #[error("class {class} needs {needed} samples but only {available} are available")]
    Shortage {
        class: usize,
        needed: usize,
        available: usize,
    },

    #[error("malformed IDX data in {file} at byte offset {offset}: {reason}")]
    Format {
        file: String,
        offset: usize,
        reason: String,
    },

    #[error("KL divergence undefined: P[{index}] > 0 but Q[{index}] = 0")]
    DivergenceUndefined { index: usize },

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            constraint: constraint.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
