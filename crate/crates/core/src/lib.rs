//! Saliency-guided region-of-interest selection and temporal event spotting.
//!
//! The crate covers the full desk-scale pipeline: flat binary tensor I/O,
//! saliency construction from feature volumes, threshold-driven minimal
//! rectangle search with fixed aspect, overlapped-clip score aggregation,
//! 1-D non-maximum suppression, and mAP@δ evaluation — plus a seeded
//! synthetic-scene generator and brute-force oracles to test it all against.

// Validation guards are written `!(x > 0.0)` on purpose: the negated form is
// true for NaN, while `x <= 0.0` would let NaN slip through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asv1;
pub mod error;
pub mod eval;
pub mod events;
pub mod geom;
pub mod roi;
pub mod saliency;
pub mod spotting;
pub mod synth;
pub mod tensor;

pub use error::{Category, Error, Result};
