use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("note {note_id}: unknown code {code}")]
    UnknownCode { note_id: String, code: String },

    #[error("duplicate {what} {id:?}")]
    Duplicate { what: &'static str, id: String },

    #[error("score {value} for ({note_id}, {code_id}) is outside [0, 1]")]
    ScoreOutOfRange {
        note_id: String,
        code_id: String,
        value: f64,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{metric} is undefined: {reason}")]
    Undefined {
        metric: &'static str,
        reason: String,
    },

    #[error("note {note_id}, section {section}: {message}")]
    Expansion {
        note_id: String,
        section: usize,
        message: String,
    },

    #[error("no cached response for key {0}")]
    CacheMiss(String),

    #[error("non-finite {what}")]
    NonFinite { what: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
