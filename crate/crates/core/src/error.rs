use std::io;

use thiserror::Error;

/// Errors produced anywhere in the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid STFT configuration: {0}")]
    InvalidConfig(String),

    #[error("window/hop pair does not admit a stable inverse: {0}")]
    NotInvertible(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("tridiagonal system is not positive definite at row {row}")]
    NotPositiveDefinite { row: usize },

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("model error: {0}")]
    Model(String),

    #[error("wav error: {0}")]
    Wav(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Failures decoding one of the binary containers (PSPC, PPDF, PDNW, PPDH).
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated input: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },

    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },

    #[error("invalid field {field}: {reason}")]
    InvalidField { field: &'static str, reason: String },

    #[error("layer dimensions do not chain: {0}")]
    DimensionMismatch(String),

    #[error("model head mismatch: expected {expected}, found {found}")]
    HeadMismatch {
        expected: &'static str,
        found: &'static str,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
