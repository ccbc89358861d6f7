use std::path::PathBuf;

/// Errors produced anywhere in the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("FFT length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("channel length {channel_len} exceeds cyclic prefix length {cp_len}")]
    ChannelTooLong { channel_len: usize, cp_len: usize },

    #[error(
        "degenerate power delay profile: |C[{row},{col}]| = {magnitude:e} below guard {guard:e}"
    )]
    DegeneratePdp {
        row: usize,
        col: usize,
        magnitude: f64,
        guard: f64,
    },

    #[error("virtual pilot estimation failed: {0}")]
    EstimationFailure(String),

    #[error(
        "ill-conditioned least-squares system (condition number {condition:e}, limit {limit:e})"
    )]
    IllConditioned { condition: f64, limit: f64 },

    #[error("non-finite training loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },

    #[error("corrupt weight file: {0}")]
    CorruptWeights(String),

    #[error("weight file mismatch: {field} expected {expected}, found {found}")]
    WeightMismatch {
        field: &'static str,
        expected: String,
        found: String,
    },

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("config error: {0}")]
    Config(String),

    #[error("CSV schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn mismatch(expected: impl ToString, found: impl ToString) -> Error {
    Error::DimensionMismatch {
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
