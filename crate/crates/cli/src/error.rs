use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] csc_core::Error),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    /// Reports were written, but some row failed its threshold.
    #[error("verification failed: {0}")]
    VerificationFailed(String),

    /// Reports were written, but no computation succeeded.
    #[error("computation failed: {0}")]
    ComputationFailed(String),
}

impl CliError {
    /// 0 success, 1 numerical failure, 2 configuration, 3 incomplete
    /// spectrum, 4 unsupported geometry, 5 verification failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                csc_core::Error::InvalidArgument(_) | csc_core::Error::Configuration(_) => 2,
                csc_core::Error::IncompleteSpectrum { .. } => 3,
                csc_core::Error::UnsupportedGeometry(_) => 4,
                _ => 1,
            },
            CliError::Io { .. } => 1,
            CliError::VerificationFailed(_) => 5,
            CliError::ComputationFailed(_) => 1,
        }
    }
}
