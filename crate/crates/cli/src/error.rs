use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] vulnrank_core::Error),
    #[error("missing {artifact}: run stage {stage} first")]
    MissingArtifact { stage: &'static str, artifact: String },
    #[error("{stage}: config changed since {artifact} was produced; rerun with --force to overwrite")]
    ConfigMismatch { stage: &'static str, artifact: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 config, 3 missing upstream artifact, 4 data contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(vulnrank_core::Error::Config(_)) | CliError::ConfigMismatch { .. } => 2,
            CliError::MissingArtifact { .. } => 3,
            CliError::Core(_) | CliError::Io { .. } => 4,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
