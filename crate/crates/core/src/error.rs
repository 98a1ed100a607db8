use thiserror::Error;

/// Errors produced by the quantization toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// The caller supplied data that violates an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A codebook violates one of its structural invariants.
    #[error("invalid codebook: {0}")]
    InvalidCodebook(String),

    /// A packed stream has the wrong magic, version or header layout.
    #[error("format error: {0}")]
    Format(String),

    /// A packed stream is truncated or carries inconsistent content.
    #[error("corrupt data: {0}")]
    Corrupt(String),

    /// Text input (codebook or config) could not be parsed.
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Training produced a non-finite loss or parameter.
    #[error("training diverged at step {step}: {msg}")]
    Divergence { step: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
