//! Crate-wide error type.
//!
//! One flat enum keeps the CLI's exit-code mapping a single `match`; the
//! [`Error::category`] helper groups variants into the classes callers
//! actually branch on (format vs. validation vs. I/O).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    // ---- tensor container format ----
    #[error("bad magic {found:?}, expected \"ASV1\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported dtype code {0}, only 0 (f32) is defined")]
    UnsupportedDtype(u8),

    #[error("rank {0} outside supported range 1..=4")]
    BadRank(u8),

    #[error("reserved header bytes must be zero, found {0:#06x}")]
    ReservedNonZero(u16),

    #[error("dimension {dim} of {dims:?} is zero")]
    ZeroDim { dim: usize, dims: Vec<u64> },

    #[error("element count of dims {dims:?} overflows addressable size")]
    DimOverflow { dims: Vec<u64> },

    #[error("payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("{0} trailing bytes after payload")]
    TrailingBytes(u64),

    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),

    // ---- event files ----
    #[error("line {line}: {msg}")]
    EventSyntax { line: usize, msg: String },

    #[error("line {line}: negative frame index {frame}")]
    NegativeFrame { line: usize, frame: i64 },

    #[error("line {line}: unknown class {class:?}")]
    UnknownClass { line: usize, class: String },

    #[error("line {line}: score {score} outside [0, 1]")]
    ScoreOutOfRange { line: usize, score: f64 },

    // ---- shape / stage / value validation ----
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("saliency volume is at stage {found:?}, operation requires {expected}")]
    WrongStage { expected: &'static str, found: String },

    #[error("negative value {value} at {context}")]
    NegativeValue { context: String, value: f64 },

    #[error("frame {frame}: probabilities sum to {sum}, expected 1 within {tol}")]
    NotNormalized { frame: usize, sum: f64, tol: f64 },

    #[error("invalid parameter {name}: {msg}")]
    InvalidParam { name: &'static str, msg: String },

    #[error("frame {frame}: label {label} out of range for {classes} classes")]
    LabelOutOfRange {
        frame: usize,
        label: usize,
        classes: usize,
    },

    #[error("frame {frame} covered by no clip")]
    UncoveredFrame { frame: usize },

    #[error("clip starts not sorted ascending at index {0}")]
    UnsortedClips(usize),

    #[error("detections reference video {0:?} absent from ground truth")]
    VideoIdMismatch(String),

    #[error("frame {frame}: blob center {pos:.3} leaves grid axis of length {len}")]
    BlobLeavesGrid { frame: usize, pos: f64, len: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse classification used by the CLI to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    /// Malformed container or line syntax: the bytes cannot be decoded.
    Format,
    /// Well-formed input violating a documented pre-condition.
    Validation,
    /// Underlying filesystem failure.
    Io,
    /// Detection/ground-truth video sets do not line up.
    VideoMismatch,
}

impl Error {
    pub fn category(&self) -> Category {
        use Error::*;
        match self {
            BadMagic { .. } | UnsupportedDtype(_) | BadRank(_) | ReservedNonZero(_)
            | Truncated { .. } | TrailingBytes(_) | EventSyntax { .. } => Category::Format,
            Io(_) => Category::Io,
            VideoIdMismatch(_) => Category::VideoMismatch,
            _ => Category::Validation,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
