use std::path::PathBuf;

use thiserror::Error;

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

    #[error("dataset too sparse: {0}")]
    TooSparse(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("empty batch: no supervised positions")]
    EmptyBatch,

    #[error("training fault at epoch {epoch}: {message}")]
    TrainingFault { epoch: usize, message: String },

    #[error("non-finite value in parameter `{0}`")]
    NonFinite(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
