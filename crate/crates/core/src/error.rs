//! Error type shared across the toolkit.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration or argument values.
    #[error("config: {0}")]
    Config(String),

    /// Filesystem failure with the offending path.
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed or unexpected file contents.
    #[error("format: {0}")]
    Format(String),

    /// Tensor/image shape mismatch between operands.
    #[error("shape: {0}")]
    Shape(String),

    /// Input outside the mathematical domain of an operation.
    #[error("domain: {0}")]
    Domain(String),

    /// Degenerate input (empty field, empty mask, no views, ...).
    #[error("empty: {0}")]
    Empty(String),

    /// NaN/Inf encountered where finite values are required.
    #[error("non-finite: {0}")]
    NonFinite(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI error taxonomy:
    /// 2 config, 3 I/O or format, 4 empty/degenerate, 5 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Shape(_) | Error::Domain(_) => 2,
            Error::Io { .. } | Error::Format(_) => 3,
            Error::Empty(_) => 4,
            Error::NonFinite(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
