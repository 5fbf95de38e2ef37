use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the pipeline. Each variant maps to a CLI exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("data error at {path}:{line}: {message}")]
    DataAt {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{ticker} is unlabelable at {date}: no trading day within tolerance")]
    Unlabelable { ticker: String, date: chrono::NaiveDate },

    #[error("validation failed: {message}")]
    Validation {
        message: String,
        violations: Vec<String>,
    },

    #[error("training error: {0}")]
    Training(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Error::Validation {
            message: message.into(),
            violations: Vec::new(),
        }
    }

    /// Process exit status: 1 usage/config, 2 data, 3 validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::Data(_)
            | Error::DataAt { .. }
            | Error::Unlabelable { .. }
            | Error::Training(_)
            | Error::Io { .. }
            | Error::Json(_) => 2,
            Error::Validation { .. } => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
