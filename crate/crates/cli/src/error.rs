use std::path::PathBuf;

use crate::config::ConfigError;

/// Process exit status for usage and configuration problems.
pub const EXIT_USAGE: i32 = 1;
/// Process exit status for bad or missing input data.
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] nlos_core::Error),
    #[error("{0}")]
    Data(String),
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

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Core(nlos_core::Error::Parameter { .. } | nlos_core::Error::InvalidGrid(_)) => {
                EXIT_USAGE
            }
            CliError::Core(_) | CliError::Data(_) | CliError::Io { .. } => EXIT_DATA,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
