//! In-memory array types shared across the pipeline.
//!
//! Everything is stored row-major in flat `Vec<f32>` buffers, matching the
//! on-disk tensor container byte for byte so that read/write round-trips are
//! bit-exact. Accumulating arithmetic elsewhere in the crate runs in `f64`
//! and rounds back to `f32` only at operation outputs.

use crate::error::{Error, Result};

/// Probability frames must sum to 1 within this absolute tolerance.
///
/// Loose enough to absorb f32 storage rounding over large frames, tight
/// enough to catch a forgotten normalization (which is off by whole factors).
pub const PROB_SUM_TOL: f64 = 1e-5;

fn check_finite(data: &[f32]) -> Result<()> {
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

fn expect_len(expected: usize, found: usize, what: &str) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch {
            expected: format!("{expected} values for {what}"),
            found: format!("{found}"),
        });
    }
    Ok(())
}

/// Extractor output: `frames × channels × height × width`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume {
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    data: Vec<f32>,
}

impl FeatureVolume {
    pub fn new(
        frames: usize,
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        for (name, v) in [
            ("frames", frames),
            ("channels", channels),
            ("height", height),
            ("width", width),
        ] {
            if v == 0 {
                return Err(Error::InvalidParam {
                    name,
                    msg: "must be >= 1".into(),
                });
            }
        }
        expect_len(frames * channels * height * width, data.len(), "volume")?;
        check_finite(&data)?;
        Ok(Self {
            frames,
            channels,
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn at(&self, l: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[((l * self.channels + c) * self.height + y) * self.width + x]
    }

    /// One channel plane of one frame, `height × width` values.
    pub fn plane(&self, l: usize, c: usize) -> &[f32] {
        let n = self.height * self.width;
        let off = (l * self.channels + c) * n;
        &self.data[off..off + n]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

/// Pipeline position of a saliency volume. Operations check the stage they
/// consume so that, e.g., probability normalization cannot run on raw
/// channel averages by accident.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Channel-averaged activations, arbitrary scale.
    Raw,
    /// Per-frame min-max normalized into [0, 1].
    Normalized,
    /// Bilinearly upsampled, still in [0, 1].
    Upsampled,
    /// Gaussian-smoothed, still in [0, 1].
    Smoothed,
    /// Per-frame probability mass, rows sum to 1.
    Probability,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Raw => "raw",
            Stage::Normalized => "normalized",
            Stage::Upsampled => "upsampled",
            Stage::Smoothed => "smoothed",
            Stage::Probability => "probability",
        }
    }
}

/// Single-channel saliency, `frames × height × width`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyVolume {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub stage: Stage,
    data: Vec<f32>,
}

impl SaliencyVolume {
    pub fn new(
        frames: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
        stage: Stage,
    ) -> Result<Self> {
        for (name, v) in [("frames", frames), ("height", height), ("width", width)] {
            if v == 0 {
                return Err(Error::InvalidParam {
                    name,
                    msg: "must be >= 1".into(),
                });
            }
        }
        expect_len(frames * height * width, data.len(), "saliency volume")?;
        check_finite(&data)?;
        let sv = Self {
            frames,
            height,
            width,
            stage,
            data,
        };
        sv.validate_stage()?;
        Ok(sv)
    }

    /// Re-checks the invariants implied by `self.stage`.
    fn validate_stage(&self) -> Result<()> {
        match self.stage {
            Stage::Raw => Ok(()), // any finite values
            Stage::Normalized | Stage::Upsampled | Stage::Smoothed => {
                for (i, &v) in self.data.iter().enumerate() {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::InvalidParam {
                            name: "saliency value",
                            msg: format!("{v} at flat index {i} outside [0, 1] for stage {}",
                                self.stage.name()),
                        });
                    }
                }
                Ok(())
            }
            Stage::Probability => {
                for l in 0..self.frames {
                    let mut sum = 0.0f64;
                    for (i, &v) in self.frame(l).iter().enumerate() {
                        if v < 0.0 {
                            return Err(Error::NegativeValue {
                                context: format!("frame {l}, cell {i}"),
                                value: v as f64,
                            });
                        }
                        sum += v as f64;
                    }
                    if (sum - 1.0).abs() > PROB_SUM_TOL {
                        return Err(Error::NotNormalized {
                            frame: l,
                            sum,
                            tol: PROB_SUM_TOL,
                        });
                    }
                }
                Ok(())
            }
        }
    }

    pub fn require_stage(&self, expected: Stage) -> Result<()> {
        if self.stage != expected {
            return Err(Error::WrongStage {
                expected: expected.name(),
                found: self.stage.name().into(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, l: usize, y: usize, x: usize) -> f32 {
        self.data[(l * self.height + y) * self.width + x]
    }

    /// One frame, `height × width` values.
    pub fn frame(&self, l: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[l * n..(l + 1) * n]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

/// Per-frame class scores: `frames × (classes + 1)` with column 0 reserved
/// for background. Values live in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSequence {
    pub frames: usize,
    /// Foreground class count; row width is `classes + 1`.
    pub classes: usize,
    data: Vec<f32>,
}

impl ScoreSequence {
    pub fn new(frames: usize, classes: usize, data: Vec<f32>) -> Result<Self> {
        if frames == 0 {
            return Err(Error::InvalidParam {
                name: "frames",
                msg: "must be >= 1".into(),
            });
        }
        if classes == 0 {
            return Err(Error::InvalidParam {
                name: "classes",
                msg: "must be >= 1 foreground class".into(),
            });
        }
        expect_len(frames * (classes + 1), data.len(), "score sequence")?;
        check_finite(&data)?;
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParam {
                name: "score",
                msg: format!("{} at flat index {i} outside [0, 1]", data[i]),
            });
        }
        Ok(Self {
            frames,
            classes,
            data,
        })
    }

    #[inline]
    pub fn at(&self, t: usize, class: usize) -> f32 {
        self.data[t * (self.classes + 1) + class]
    }

    /// Scores row for frame `t`, `classes + 1` wide.
    pub fn row(&self, t: usize) -> &[f32] {
        let w = self.classes + 1;
        &self.data[t * w..(t + 1) * w]
    }

    /// Column `class` across all frames (copied; rows are the storage order).
    pub fn column(&self, class: usize) -> Vec<f32> {
        (0..self.frames).map(|t| self.at(t, class)).collect()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

/// Generic per-frame embeddings: `frames × dim`, unconstrained finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: usize,
    pub dim: usize,
    data: Vec<f32>,
}

impl FeatureSequence {
    pub fn new(frames: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if frames == 0 || dim == 0 {
            return Err(Error::InvalidParam {
                name: "shape",
                msg: format!("frames {frames} × dim {dim} must both be >= 1"),
            });
        }
        expect_len(frames * dim, data.len(), "feature sequence")?;
        check_finite(&data)?;
        Ok(Self { frames, dim, data })
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_volume_rejects_length_mismatch() {
        let err = FeatureVolume::new(1, 2, 2, 2, vec![0.0; 7]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn feature_volume_rejects_nan() {
        let err = FeatureVolume::new(1, 1, 1, 2, vec![0.0, f32::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(1)));
    }

    #[test]
    fn indexing_is_row_major() {
        let data: Vec<f32> = (0..24).map(|v| v as f32).collect();
        let fv = FeatureVolume::new(2, 3, 2, 2, data).unwrap();
        // (l, c, y, x) == ((l*3 + c)*2 + y)*2 + x
        assert_eq!(fv.at(1, 2, 1, 0), 22.0);
        assert_eq!(fv.plane(0, 1), &[4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn probability_stage_checks_frame_sums() {
        let ok = SaliencyVolume::new(1, 1, 2, vec![0.5, 0.5], Stage::Probability);
        assert!(ok.is_ok());
        let err =
            SaliencyVolume::new(1, 1, 2, vec![0.5, 0.6], Stage::Probability).unwrap_err();
        assert!(matches!(err, Error::NotNormalized { frame: 0, .. }));
    }

    #[test]
    fn normalized_stage_rejects_out_of_range() {
        let err =
            SaliencyVolume::new(1, 1, 2, vec![0.5, 1.5], Stage::Normalized).unwrap_err();
        assert!(matches!(err, Error::InvalidParam { .. }));
        // Raw accepts anything finite.
        assert!(SaliencyVolume::new(1, 1, 2, vec![-3.0, 42.0], Stage::Raw).is_ok());
    }

    #[test]
    fn score_sequence_row_width_is_classes_plus_one() {
        let seq = ScoreSequence::new(2, 2, vec![0.1; 6]).unwrap();
        assert_eq!(seq.row(1).len(), 3);
        assert!(ScoreSequence::new(2, 2, vec![0.1; 4]).is_err());
    }

    #[test]
    fn score_sequence_rejects_out_of_range() {
        assert!(ScoreSequence::new(1, 1, vec![0.0, 1.2]).is_err());
        assert!(ScoreSequence::new(1, 1, vec![-0.1, 0.2]).is_err());
    }
}
