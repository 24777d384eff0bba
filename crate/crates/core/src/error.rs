use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error("unsupported checkpoint version {found:?} (expected {expected:?})")]
    Version { found: String, expected: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("degenerate dimension {dim}: std {std:e} below 1e-8")]
    DegenerateDimension { dim: usize, std: f64 },

    #[error("alignment error: {features} feature frames vs {motion} motion frames")]
    Alignment { features: usize, motion: usize },

    #[error("input too short: {0}")]
    TooShort(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the command-line error prefix.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Format(_) => "format",
            Error::Unsupported(_) => "unsupported",
            Error::Version { .. } => "version",
            Error::Shape(_) => "shape",
            Error::Numeric(_) => "numeric",
            Error::DegenerateDimension { .. } => "degenerate",
            Error::Alignment { .. } => "alignment",
            Error::TooShort(_) => "too_short",
            Error::Insufficient(_) => "insufficient",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::ConfigMismatch(_) => "config_mismatch",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(format!("json: {e}"))
    }
}
