use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: field `{field}`: {message}")]
    Field {
        line: usize,
        field: &'static str,
        message: String,
    },

    #[error("line {line}: conflicting labels for {id} {cell}: {first} then {second}")]
    ConflictingLabel {
        line: usize,
        id: String,
        cell: String,
        first: String,
        second: String,
    },

    #[error("prediction table `{model_id}` is incomplete: {missing} missing cells")]
    Incomplete { model_id: String, missing: usize },

    #[error("unknown quadruple {0}")]
    UnknownQuadruple(String),

    #[error("cannot compute {0} over an empty outcome list")]
    Empty(&'static str),

    #[error("invalid bootstrap configuration: {0}")]
    BootstrapConfig(String),

    #[error("logit key sets differ: missing from original {missing_original:?}, missing from contrast {missing_contrast:?}")]
    KeyMismatch {
        missing_original: Vec<String>,
        missing_contrast: Vec<String>,
    },

    #[error("non-finite logit for token `{0}`")]
    NonFinite(String),

    #[error("empty logit vector")]
    EmptyLogits,

    #[error("invalid fusion strength {0}; alpha must be finite and >= 0")]
    Alpha(f64),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("runner reported an error: {0}")]
    Runner(String),

    #[error("session file message {index}: {message}")]
    Session { index: usize, message: String },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
