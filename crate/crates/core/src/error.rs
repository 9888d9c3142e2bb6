use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library. Messages are single-line and prefixed
/// with the module that produced them so the CLI can print them verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{module}: domain error: {msg}")]
    Domain { module: &'static str, msg: String },

    #[error("{module}: shape error: expected {expected}, got {got}")]
    Shape {
        module: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{module}: config error: {msg}")]
    Config { module: &'static str, msg: String },

    #[error("{module}: construction error: {msg}")]
    Construction { module: &'static str, msg: String },

    #[error("integrator: runtime error: non-finite state for particle {particle} at step {step}")]
    NonFinite { particle: usize, step: usize },

    #[error("persistence: I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("persistence: format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            module,
            msg: msg.into(),
        }
    }

    pub(crate) fn config(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Config {
            module,
            msg: msg.into(),
        }
    }

    pub(crate) fn construction(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Construction {
            module,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
