use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic: expected \"EMBSIG01\", found {found:?}")]
    BadMagic { found: Vec<u8> },

    #[error("truncated file: expected {expected} bytes of {what}, found {found}")]
    Truncated {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("dimension mismatch: header declares {declared} values, payload holds {actual}")]
    DimensionMismatch { declared: usize, actual: usize },

    #[error("malformed input at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("audio shorter than one window ({duration}s <= {window}s)")]
    AudioTooShort { duration: f64, window: f64 },

    #[error("optimizer diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },
}
