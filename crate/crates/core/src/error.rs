use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("tile sample set is empty")]
    EmptyTileSample,

    #[error("model tile has never been seen")]
    UnseenTile,

    #[error("malformed background model: {0}")]
    ModelFormat(String),

    #[error("all particle weights are zero")]
    DegenerateWeights,

    #[error("purge would remove every particle")]
    PurgeWouldEmpty,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("malformed trial log line {line}: {message}")]
    LogFormat { line: usize, message: String },

    #[error("malformed report: {0}")]
    ReportFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
