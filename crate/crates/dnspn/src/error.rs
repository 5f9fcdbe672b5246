use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] dnspn_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("usage: {0}")]
    Usage(String),

    #[error("data: {0}")]
    Data(String),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl std::fmt::Display) -> Self {
        CliError::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        use dnspn_core::Error as E;
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Data(_) | CliError::Format { .. } => exit::DATA,
            CliError::Io { .. } => exit::OTHER,
            CliError::Core(e) => match e {
                E::Parameter(_) | E::Usage(_) => exit::USAGE,
                E::Numeric(_) => exit::NUMERIC,
                E::Shape { .. } | E::Data(_) | E::Domain(_) | E::UndefinedMetric(_) => exit::DATA,
            },
        }
    }
}
