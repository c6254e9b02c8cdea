use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The scenario document is not well-formed.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// A field holds a value that violates a physical or structural invariant.
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Degenerate geometry or inputs that make a channel or rate undefined.
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by the content of the scenario rather than by I/O.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Parse { .. } | Error::Invalid { .. })
    }
}
