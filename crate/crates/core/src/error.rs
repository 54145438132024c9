use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("unsupported compat mode {mode} for {what}")]
    UnsupportedMode { mode: String, what: String },

    #[error("unsupported bundle: {0}")]
    UnsupportedBundle(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("training aborted: {0}")]
    Aborted(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
