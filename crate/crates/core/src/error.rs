use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("data integrity error at row {row} ({date}): {message}")]
    DataIntegrity {
        row: usize,
        date: String,
        message: String,
    },

    #[error("date gap between {before} and {after}: series must be daily and contiguous")]
    Gap { before: String, after: String },

    #[error("length error: {0}")]
    Length(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("prior spec error: {0}")]
    Spec(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("resume error in {dir}: {message}; remove the directory to start over")]
    Resume { dir: PathBuf, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
