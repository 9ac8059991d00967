use std::path::PathBuf;

use imetricgan::Error as CoreError;
use thiserror::Error;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{message}; last good checkpoint: {}", last_checkpoint.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "none".into()))]
    Diverged { message: String, last_checkpoint: Option<PathBuf> },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Diverged { .. } => EXIT_DIVERGED,
        }
    }

    /// Stable prefix of the message on standard error.
    pub fn prefix(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "error[usage]",
            CliError::Data(_) => "error[data]",
            CliError::Diverged { .. } => "error[diverged]",
        }
    }

    pub fn data(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{context}: {e}"))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidArgument(_) => CliError::Usage(e.to_string()),
            CoreError::Diverged(_) => CliError::Diverged { message: e.to_string(), last_checkpoint: None },
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
