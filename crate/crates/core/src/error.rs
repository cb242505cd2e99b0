use std::path::PathBuf;

use thiserror::Error;
use uda_autograd::TensorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("class id {id} at pixel ({y}, {x}) is not below {classes}")]
    InvalidLabel {
        id: usize,
        y: usize,
        x: usize,
        classes: usize,
    },
    #[error("pixel ({y}, {x}) is not one-hot (channel sum {sum})")]
    InvalidEncoding { y: usize, x: usize, sum: f32 },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("parameter schema mismatch: {0}")]
    Schema(String),
    #[error("invalid config at `{key}`: {msg}")]
    Config { key: String, msg: String },
    #[error("missing prerequisite: {0}")]
    Prerequisite(String),
    #[error("numerical fault at step {step}: `{term}` is not finite")]
    NumericalFault { step: usize, term: String },
    #[error("domain gap undefined: upper bound equals source-only score ({0})")]
    UndefinedGap(f64),
    #[error("class subset is empty")]
    EmptySubset,
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Prerequisite(_) | Error::Checkpoint { .. } => 3,
            Error::NumericalFault { .. } => 4,
            _ => 1,
        }
    }
}
