use std::path::PathBuf;

use crate::formats::ArrayTag;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible target: {0}")]
    Infeasible(String),

    #[error("malformed {array} at offset {offset}: {reason}")]
    Malformed {
        array: ArrayTag,
        offset: usize,
        reason: String,
    },

    #[error("index value {0} does not fit in 32 bits")]
    IndexOverflow(u64),

    #[error("value {value} is not representable with {bits} bits")]
    NotRepresentable { value: f64, bits: u32 },

    #[error("cost table has no entry for {0}")]
    MissingCost(String),

    #[error("container error [{code}]: {message}")]
    Container { code: &'static str, message: String },

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn malformed(array: ArrayTag, offset: usize, reason: impl Into<String>) -> Self {
        Error::Malformed {
            array,
            offset,
            reason: reason.into(),
        }
    }

    pub(crate) fn container(code: &'static str, message: impl Into<String>) -> Self {
        Error::Container {
            code,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
