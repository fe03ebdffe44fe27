//! Library half of the `weakpovm` command-line tool.
//!
//! Each command builds a [`bundle::ResultBundle`] plus any CSV artifacts in
//! memory; [`commands::write_outputs`] writes them once at the end of a run.

pub mod bundle;
pub mod commands;
pub mod io;

use weakpovm::Error as CoreError;

/// Exit classes of the tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    ValidationFailed,
    StatisticalFailed,
    InvariantFailed,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::ValidationFailed => 1,
            Status::StatisticalFailed => 2,
            Status::InvariantFailed => 3,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("element {index}: {message}")]
    Element { index: usize, message: String },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    /// Input and configuration problems exit with 1, everything else that
    /// escapes the library is a numerical failure.
    pub fn status(&self) -> Status {
        match self {
            CliError::Io { .. }
            | CliError::Parse { .. }
            | CliError::Element { .. }
            | CliError::Usage(_) => Status::ValidationFailed,
            CliError::Core(e) => match e {
                CoreError::NotHermitian { .. }
                | CoreError::NonFinite
                | CoreError::NotPositive { .. }
                | CoreError::Incomplete { .. }
                | CoreError::Empty
                | CoreError::LabelMismatch { .. }
                | CoreError::InvalidState(_)
                | CoreError::OracleGuard { .. }
                | CoreError::Config(_) => Status::ValidationFailed,
                _ => Status::InvariantFailed,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
