use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FpmError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid LED geometry: {0}")]
    Geometry(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("LED {index} window (shift {shift:?}) exceeds the {q}x{q} frequency grid")]
    OutOfBand { index: usize, shift: (i64, i64), q: usize },

    #[error("noise scaling undefined: bright-field measurements have zero mean")]
    ZeroBrightField,

    #[error("reconstruction diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("design row {row} is entirely zero after masking and clamping")]
    DegenerateRow { row: usize },

    #[error("PSNR peak undefined: ground truth has zero dynamic range in band")]
    UndefinedPeak,

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("design geometry fingerprint {found:016x} does not match current geometry {expected:016x}")]
    Fingerprint { expected: u64, found: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FpmError>;
