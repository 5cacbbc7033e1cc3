use std::path::PathBuf;

/// Errors raised by the statistics engine.
///
/// Every variant describes a problem with the data handed to the engine;
/// configuration problems are the caller's concern.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A single malformed record in a line-delimited input.
    #[error("{source_name}: row {row}: {message}")]
    Record {
        source_name: String,
        row: usize,
        message: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(String),

    /// A statistic whose value is mathematically undefined on the given data.
    #[error("undefined: {0}")]
    Undefined(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("training diverged: {0}")]
    Diverged(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
