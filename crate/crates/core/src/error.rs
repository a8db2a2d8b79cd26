use std::io;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: &'static str, found: Vec<u8> },

    #[error("truncated payload: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },

    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate normalization stats: min {min} must be < max {max}")]
    DegenerateStats { min: f64, max: f64 },

    #[error("unsupported resample factor {0} (expected 1, 2 or 4)")]
    UnsupportedFactor(usize),

    #[error("{height}x{width} is not divisible by factor {factor}")]
    NotDivisible {
        height: usize,
        width: usize,
        factor: usize,
    },

    #[error("field is {height}x{width}, needs at least {min}x{min}")]
    TooSmall {
        height: usize,
        width: usize,
        min: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("input value {value} at index {index} outside [-0.5, 1.5]; was the field normalized?")]
    InputOutOfRange { index: usize, value: f64 },

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("non-finite output at autoregressive iteration {iteration}")]
    NonFiniteIterate { iteration: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("no matching stems between low- and high-resolution directories")]
    NoMatchingPairs,

    #[error("dimension mismatch for {}", .0.join(", "))]
    PairDimensionMismatch(Vec<String>),

    #[error("checkpoint is missing normalization stats")]
    MissingNormStats,

    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
