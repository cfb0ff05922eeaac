use std::path::Path;

use polarsep_core::Error as CoreError;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Failure of a command, grouped by the exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const NUMERIC: u8 = 4;

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => Self::USAGE,
            CliError::Io(_) => Self::IO,
            CliError::Numeric(_) => Self::NUMERIC,
        }
    }

    pub(crate) fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Io { .. } | CoreError::Format { .. } => CliError::Io(e.to_string()),
            CoreError::Singular { .. } => CliError::Numeric(e.to_string()),
            CoreError::ShapeMismatch(_) | CoreError::InvalidInput(_) | CoreError::Config(_) => {
                CliError::Usage(e.to_string())
            }
        }
    }
}
