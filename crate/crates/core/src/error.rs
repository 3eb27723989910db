use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("query text is empty")]
    EmptyQuery,
    #[error("empty atom in query {0:?}")]
    EmptyAtom(String),
    #[error("connectives in {0:?} do not form one of the seven templates")]
    MixedTemplate(String),
    #[error("unknown connective {connective:?} in {text:?}")]
    UnknownConnective { text: String, connective: String },
    #[error("invalid atom {0:?}: atoms must not contain connective words")]
    InvalidAtom(String),
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("vocabulary too small: {0}")]
    VocabTooSmall(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
    #[error("in-batch negatives need at least 2 samples, got {0}")]
    BatchTooSmall(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("relevant set is empty")]
    EmptyRelevantSet,
    #[error("non-finite loss at step {step} ({phase}): {value}")]
    DivergedLoss { phase: &'static str, step: usize, value: f64 },
    #[error("malformed record at {path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
