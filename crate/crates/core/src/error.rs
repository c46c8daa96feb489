use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    Domain(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("training failed{}: {msg}", layer.map(|l| format!(" at layer {l}")).unwrap_or_default())]
    Training { layer: Option<usize>, msg: String },

    #[error("sampling produced a non-finite value at denoising step {tau}")]
    Sampling { tau: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt artifact {path}: {msg}")]
    Corrupt { path: PathBuf, msg: String },
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn corrupt(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Corrupt {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code for the CLI: 2 config, 3 I/O or corruption, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Shape(_) => 2,
            Error::Io { .. } | Error::Corrupt { .. } => 3,
            Error::Domain(_) | Error::State(_) | Error::Training { .. } | Error::Sampling { .. } => 4,
        }
    }
}
