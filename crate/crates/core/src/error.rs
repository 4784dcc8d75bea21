use thiserror::Error;

/// Errors raised by the training pipeline and its file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no samples")]
    NoSamples,

    #[error("empty group")]
    EmptyGroup,

    #[error("group size must be at least 2, got {0}")]
    GroupTooSmall(usize),

    #[error("unserializable reasoning text")]
    UnserializableThink,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("bin {bin} out of range for {bins} bins")]
    BinOutOfRange { bin: usize, bins: usize },

    #[error("non-finite log-probability")]
    NonFinite,

    #[error("infeasible spec: {0}")]
    InfeasibleSpec(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("malformed input at line {line}: {msg}")]
    Malformed { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
