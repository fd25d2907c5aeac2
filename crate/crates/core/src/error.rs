use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("range error: {0}")]
    Range(String),

    #[error("arithmetic error: {0}")]
    Arithmetic(String),

    #[error("format error in `{channel}`: {reason}")]
    Format { channel: String, reason: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("not identifiable: regressor has rank {rank} of {cols} columns")]
    Identifiability { rank: usize, cols: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(channel: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            channel: channel.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the numerics rather than by bad input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Arithmetic(_) | Error::Identifiability { .. } | Error::Degenerate(_)
        )
    }
}
