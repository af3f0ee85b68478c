use std::path::PathBuf;

/// Errors raised by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty sequence{}", fmt_id(.0))]
    EmptySequence(Option<String>),

    #[error("sequence too short: length {len} < required {required}")]
    SequenceTooShort { len: usize, required: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("tensor file {path}: {message}")]
    TensorFormat { path: PathBuf, message: String },

    #[error("missing {modality} scores for sample '{id}'")]
    MissingModality { modality: String, id: String },

    #[error("no positive labels: average precision is undefined")]
    NoPositives,

    #[error("audio decode error: {0}")]
    Audio(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

fn fmt_id(id: &Option<String>) -> String {
    match id {
        Some(id) => format!(" (sample '{id}')"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
