use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the vulnrank pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration or unusable input location.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's preconditions (bad ids, shape mismatch, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Input data is malformed or unsuitable for the requested operation.
    #[error("data error: {0}")]
    Data(String),

    /// Training produced a non-finite loss.
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

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

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
