use thiserror::Error;

pub type Result<T> = std::result::Result<T, HdoError>;

#[derive(Debug, Error)]
pub enum HdoError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("format error at row {row}: {message}")]
    Format { row: usize, message: String },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HdoError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        HdoError::InvalidArgument(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        HdoError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        HdoError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(HdoError::DimensionMismatch { expected, got });
    }
    Ok(())
}
