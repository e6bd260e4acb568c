use std::fmt;

use weakprobe_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(CoreError),
    #[error("{0}")]
    NonConvergence(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn validation(msg: impl fmt::Display) -> Self {
        Self::Validation(msg.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Validation(_) => 2,
            Self::Numerical(_) => 3,
            Self::NonConvergence(_) => 4,
            Self::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Validation(_) => "validation",
            Self::Numerical(_) => "numerical",
            Self::NonConvergence(_) => "non-convergence",
            Self::Io(_) => "io",
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        // bad user input caught by the core is still a validation failure
        match e {
            CoreError::InvalidParameter(_)
            | CoreError::InvalidGrid(_)
            | CoreError::UnsupportedAngle { .. }
            | CoreError::SampleOutOfRange { .. }
            | CoreError::DimensionMismatch { .. } => Self::Validation(e.to_string()),
            other => Self::Numerical(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
