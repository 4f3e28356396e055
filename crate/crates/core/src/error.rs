use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("degenerate (zero-norm) vector at {0}")]
    DegenerateVector(String),

    #[error("invalid state: {0}")]
    InvalidState(&'static str),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("insufficient confounders: batch of {batch} rows cannot supply {requested} confounders per row")]
    InsufficientConfounders { batch: usize, requested: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dim { expected: usize, found: usize },

    #[error("empty table: {0}")]
    EmptyTable(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("word not in vocabulary: {0:?}")]
    Vocabulary(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint architecture mismatch: {0}")]
    ConfigMismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (files, flags, configs)
    /// rather than by a bug or an internal numerical failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::InvalidState(_) | Error::Shape { .. } | Error::Domain(_)
        )
    }
}
