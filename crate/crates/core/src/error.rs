use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: unexpected header, expected `{expected}`")]
    Header {
        path: PathBuf,
        expected: &'static str,
    },

    #[error("{path}:{line}: {message}")]
    Row {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("unknown {kind} `{id}`")]
    Lookup { kind: &'static str, id: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("index {index} out of bounds for {what} with {len} rows")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("structural mismatch: {0}")]
    Structure(String),

    #[error("{0}: not a model file")]
    NotAModelFile(PathBuf),

    #[error("{path}: unsupported version {version}")]
    UnsupportedVersion { path: PathBuf, version: u64 },

    #[error("integrity error in `{field}`: {message}")]
    Integrity { field: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn integrity(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Integrity {
            field: field.into(),
            message: message.into(),
        }
    }
}
