use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("argument error: {0}")]
    Argument(String),
    #[error("degenerate feature: {0}")]
    Degenerate(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("oracle failure: {0}")]
    OracleFailure(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("feature {index}: {source}")]
    Feature {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by bad inputs or configuration, as opposed to
    /// failures during computation.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::Format(_)
            | Error::Corrupt(_)
            | Error::Validation(_)
            | Error::Shape(_)
            | Error::Alignment(_)
            | Error::Manifest(_)
            | Error::Domain(_)
            | Error::Argument(_)
            | Error::Json(_) => true,
            Error::Degenerate(_)
            | Error::Internal(_)
            | Error::Budget(_)
            | Error::OracleFailure(_) => false,
            Error::Feature { source, .. } => source.is_validation(),
        }
    }
}
