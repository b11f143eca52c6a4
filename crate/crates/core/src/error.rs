use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{balance} balance violated at index {index} (t={period}): relative residual {residual:.3e} exceeds {tolerance:.1e}")]
    Balance {
        balance: &'static str,
        index: usize,
        period: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("fixed point did not converge after {iterations} iterations (last residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("nest {nest} of sector {sector} is unidentified: {reason}")]
    UnidentifiedNest {
        sector: usize,
        nest: usize,
        reason: String,
    },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("synthetic economy generation failed after {retries} retries: {reason}")]
    GenerationFailed { retries: usize, reason: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Error::Validation(message.into())
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
