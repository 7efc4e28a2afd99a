use thiserror::Error;

/// Errors raised by the estimation and filter-design routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A variable or function that must be non-constant has zero variance.
    #[error("degenerate variable: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("channel is not binary-input symmetric-output: {0}")]
    NotBiso(String),

    #[error("outside supported scope: {0}")]
    UnsupportedScope(String),

    #[error("size limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
