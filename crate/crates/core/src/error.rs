use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible tensor/signal shapes.
    #[error("shape error: {0}")]
    Shape(String),
    /// Invalid input data (wrong lengths, channel counts, value ranges).
    #[error("input error: {0}")]
    Input(String),
    /// Inconsistent or unsupported configuration.
    #[error("config error: {0}")]
    Config(String),
    /// Malformed files or on-disk data.
    #[error("data error: {0}")]
    Data(String),
    /// Non-finite values where finite numbers are required.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
