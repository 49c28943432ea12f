use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("truncated input at byte offset {offset}: expected {expected} bytes, found {actual}")]
    Truncated {
        offset: u64,
        expected: u64,
        actual: u64,
    },

    #[error("record {index}: {message}")]
    InvalidRecord { index: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown configuration key `{key}` (line {line})")]
    UnknownKey { key: String, line: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient samples: need {needed}, have {available}")]
    InsufficientSamples { needed: usize, available: usize },

    #[error("no frame detected (peak normalized correlation {peak_metric:.3}, threshold {threshold:.3})")]
    NoFrameDetected { peak_metric: f64, threshold: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
