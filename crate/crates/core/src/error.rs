use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("training failed for label {label}: {message}")]
    Training { label: usize, message: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("tuning failed: {0}")]
    Tuning(String),

    #[error("ensemble member {index} failed: {source}")]
    Member {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("model format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data rather than bad usage or bugs.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Validation(_)
            | Error::Format(_)
            | Error::Training { .. }
            | Error::InsufficientData(_)
            | Error::Tuning(_) => true,
            Error::Member { source, .. } => source.is_data_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
