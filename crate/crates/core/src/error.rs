use std::path::PathBuf;

use thiserror::Error;

use crate::autodiff::TensorError;
use crate::corpus::CorpusError;
use crate::inference::InferenceError;
use crate::rnng::RnngError;

/// Crate-wide error; every message is prefixed with the owning module.
#[derive(Debug, Error)]
pub enum Error {
    #[error("tensor: {0}")]
    Tensor(#[from] TensorError),
    #[error("corpus: {0}")]
    Corpus(#[from] CorpusError),
    #[error("rnng: {0}")]
    Rnng(#[from] RnngError),
    #[error("inference: {0}")]
    Inference(#[from] InferenceError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{module}: {message}")]
    Module { module: &'static str, message: String },
}

impl Error {
    pub fn module(module: &'static str, message: impl Into<String>) -> Self {
        Error::Module {
            module,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
