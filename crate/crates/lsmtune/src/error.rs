use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("corrupt file {path}: {detail}")]
    Corruption { path: PathBuf, detail: String },

    #[error("engine is closed")]
    Closed,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scan start key is above its end key")]
    InvertedRange,

    #[error("unknown workload {0:?}")]
    UnknownWorkload(String),

    #[error("parse error in {path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    #[error(transparent)]
    Core(#[from] lsmtune_core::Error),
}

impl Error {
    pub(crate) fn corrupt(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Corruption { path: path.into(), detail: detail.into() }
    }
}
