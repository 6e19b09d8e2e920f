//! Saliency construction: channel averaging, per-frame normalization,
//! bilinear upsampling, spatio-temporal Gaussian smoothing, and probability
//! normalization, in that pipeline order.
//!
//! All stages are per-element data-parallel over frames; no cross-thread
//! reductions exist, so results are independent of worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{FeatureVolume, SaliencyVolume, Stage};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaliencyConfig {
    /// Upsampling factor from feature grid to saliency grid.
    pub k: usize,
    /// Spatial Gaussian sigma, in upsampled grid cells.
    pub sigma_s: f64,
    /// Temporal Gaussian sigma, in frames; 0 disables the temporal pass.
    pub sigma_t: f64,
    /// A frame whose min-max spread falls below this is treated as
    /// information-free and normalized to all zeros.
    pub epsilon: f64,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self {
            k: 8,
            sigma_s: 2.0,
            sigma_t: 1.5,
            epsilon: 1e-9,
        }
    }
}

/// Mean over channels per cell; output is a `Raw`-stage volume.
pub fn channel_average(fv: &FeatureVolume) -> Result<SaliencyVolume> {
    let (l, d, h, w) = (fv.frames, fv.channels, fv.height, fv.width);
    let n = h * w;
    let mut out = vec![0.0f32; l * n];
    out.par_chunks_mut(n).enumerate().for_each(|(frame, dst)| {
        // f64 scratch: channel counts reach the hundreds and the averages
        // feed min-max spreads, so f32 accumulation drift is not harmless.
        let mut acc = vec![0.0f64; n];
        for c in 0..d {
            for (a, &v) in acc.iter_mut().zip(fv.plane(frame, c)) {
                *a += v as f64;
            }
        }
        let inv = 1.0 / d as f64;
        for (o, a) in dst.iter_mut().zip(acc) {
            *o = (a * inv) as f32;
        }
    });
    SaliencyVolume::new(l, h, w, out, Stage::Raw)
}

/// Per-frame min-max rescale into [0, 1]. Frames whose spread is below
/// `epsilon` carry no signal and become all zeros.
pub fn minmax_normalize(sv: &SaliencyVolume, epsilon: f64) -> Result<SaliencyVolume> {
    sv.require_stage(Stage::Raw)?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParam {
            name: "epsilon",
            msg: format!("{epsilon} must be > 0"),
        });
    }
    let n = sv.height * sv.width;
    let mut out = vec![0.0f32; sv.frames * n];
    out.par_chunks_mut(n).enumerate().for_each(|(frame, dst)| {
        let src = sv.frame(frame);
        let mut min = f32::INFINITY;
        let mut max = f32::NEG_INFINITY;
        for &v in src {
            min = min.min(v);
            max = max.max(v);
        }
        let spread = max as f64 - min as f64;
        if spread < epsilon {
            // dst is already zeroed
            return;
        }
        let inv = 1.0 / spread;
        for (o, &v) in dst.iter_mut().zip(src) {
            *o = ((v as f64 - min as f64) * inv) as f32;
        }
    });
    SaliencyVolume::new(sv.frames, sv.height, sv.width, out, Stage::Normalized)
}

/// Bilinear upsample by integer factor `k` per spatial axis.
///
/// Output cell `u` samples the source at `(u + 0.5)/k − 0.5`, clamped to the
/// valid range — the half-pixel convention, so mass stays centered rather
/// than drifting toward the origin. `k = 1` reproduces the input exactly.
pub fn upsample_bilinear(sv: &SaliencyVolume, k: usize) -> Result<SaliencyVolume> {
    sv.require_stage(Stage::Normalized)?;
    if k < 1 {
        return Err(Error::InvalidParam {
            name: "k",
            msg: "upsampling factor must be >= 1".into(),
        });
    }
    let (h, w) = (sv.height, sv.width);
    let (oh, ow) = (h * k, w * k);

    // Per-axis source coordinates are shared by every frame; precompute the
    // neighbor pair and weight once.
    let axis = |out_len: usize, src_len: usize| -> Vec<(usize, usize, f64)> {
        (0..out_len)
            .map(|u| {
                let x = ((u as f64 + 0.5) / k as f64 - 0.5).clamp(0.0, src_len as f64 - 1.0);
                let i0 = x.floor() as usize;
                let i1 = (i0 + 1).min(src_len - 1);
                (i0, i1, x - i0 as f64)
            })
            .collect()
    };
    let xs = axis(ow, w);
    let ys = axis(oh, h);

    let mut out = vec![0.0f32; sv.frames * oh * ow];
    out.par_chunks_mut(oh * ow).enumerate().for_each(|(frame, dst)| {
        let src = sv.frame(frame);
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let v00 = src[y0 * w + x0] as f64;
                let v01 = src[y0 * w + x1] as f64;
                let v10 = src[y1 * w + x0] as f64;
                let v11 = src[y1 * w + x1] as f64;
                let top = v00 + (v01 - v00) * fx;
                let bot = v10 + (v11 - v10) * fx;
                dst[oy * ow + ox] = (top + (bot - top) * fy) as f32;
            }
        }
    });
    SaliencyVolume::new(sv.frames, oh, ow, out, Stage::Upsampled)
}

/// Normalized 1-D Gaussian taps with radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParam {
            name: "sigma",
            msg: format!("{sigma} must be finite and > 0"),
        });
    }
    let r = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * r)
        .map(|i| {
            let d = i as f64 - r as f64;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    Ok(k)
}

/// Separable Gaussian smoothing: width pass, height pass (both `sigma_s`),
/// then a temporal pass over frames (`sigma_t`; 0 skips it). Borders
/// replicate the edge value, so constant volumes are preserved.
pub fn gaussian_smooth_st(
    sv: &SaliencyVolume,
    sigma_s: f64,
    sigma_t: f64,
) -> Result<SaliencyVolume> {
    if sv.stage != Stage::Upsampled && sv.stage != Stage::Normalized {
        return Err(Error::WrongStage {
            expected: "upsampled or normalized",
            found: sv.stage.name().into(),
        });
    }
    if sigma_t < 0.0 || !sigma_t.is_finite() {
        return Err(Error::InvalidParam {
            name: "sigma_t",
            msg: format!("{sigma_t} must be finite and >= 0"),
        });
    }
    let ks = gaussian_kernel(sigma_s)?;
    let rs = (ks.len() - 1) / 2;
    let (l, h, w) = (sv.frames, sv.height, sv.width);
    let n = h * w;

    // Width pass.
    let mut a = vec![0.0f32; l * n];
    a.par_chunks_mut(n).enumerate().for_each(|(frame, dst)| {
        let src = sv.frame(frame);
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            for x in 0..w {
                let mut acc = 0.0f64;
                for (j, &kv) in ks.iter().enumerate() {
                    let sx = (x as isize + j as isize - rs as isize)
                        .clamp(0, w as isize - 1) as usize;
                    acc += kv * row[sx] as f64;
                }
                dst[y * w + x] = acc as f32;
            }
        }
    });

    // Height pass.
    let mut b = vec![0.0f32; l * n];
    b.par_chunks_mut(n).enumerate().for_each(|(frame, dst)| {
        let src = &a[frame * n..(frame + 1) * n];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f64;
                for (j, &kv) in ks.iter().enumerate() {
                    let sy = (y as isize + j as isize - rs as isize)
                        .clamp(0, h as isize - 1) as usize;
                    acc += kv * src[sy * w + x] as f64;
                }
                dst[y * w + x] = acc as f32;
            }
        }
    });

    // Temporal pass.
    let out = if sigma_t == 0.0 {
        b
    } else {
        let kt = gaussian_kernel(sigma_t)?;
        let rt = (kt.len() - 1) / 2;
        let mut c = vec![0.0f32; l * n];
        c.par_chunks_mut(n).enumerate().for_each(|(frame, dst)| {
            for i in 0..n {
                let mut acc = 0.0f64;
                for (j, &kv) in kt.iter().enumerate() {
                    let sl = (frame as isize + j as isize - rt as isize)
                        .clamp(0, l as isize - 1) as usize;
                    acc += kv * b[sl * n + i] as f64;
                }
                dst[i] = acc as f32;
            }
        });
        c
    };

    SaliencyVolume::new(l, h, w, out, Stage::Smoothed)
}

/// Divides each frame by its mass so frames sum to 1. Frames with zero mass
/// become uniform — with no evidence, every cell is equally likely.
pub fn probability_normalize(sv: &SaliencyVolume) -> Result<SaliencyVolume> {
    let n = sv.height * sv.width;
    // Any non-negative volume is acceptable input; raw volumes may carry
    // negative activations and must be normalized first.
    for (i, &v) in sv.data().iter().enumerate() {
        if v < 0.0 {
            return Err(Error::NegativeValue {
                context: format!("flat index {i}"),
                value: v as f64,
            });
        }
    }
    let mut out = vec![0.0f32; sv.frames * n];
    out.par_chunks_mut(n).enumerate().for_each(|(frame, dst)| {
        let src = sv.frame(frame);
        let mut sum = 0.0f64;
        for &v in src {
            sum += v as f64;
        }
        if sum <= 0.0 {
            let uniform = (1.0 / n as f64) as f32;
            dst.fill(uniform);
        } else {
            let inv = 1.0 / sum;
            for (o, &v) in dst.iter_mut().zip(src) {
                *o = (v as f64 * inv) as f32;
            }
        }
    });
    SaliencyVolume::new(sv.frames, sv.height, sv.width, out, Stage::Probability)
}

/// Full chain: channel average → min-max normalize → upsample ×k →
/// spatio-temporal smooth → probability normalize.
pub fn build_saliency(fv: &FeatureVolume, cfg: &SaliencyConfig) -> Result<SaliencyVolume> {
    let raw = channel_average(fv)?;
    let norm = minmax_normalize(&raw, cfg.epsilon)?;
    let up = upsample_bilinear(&norm, cfg.k)?;
    let smooth = gaussian_smooth_st(&up, cfg.sigma_s, cfg.sigma_t)?;
    probability_normalize(&smooth)
}
