//! Deterministic synthetic scenes and brute-force reference implementations.
//!
//! Scenes are generated from a seed with a fixed, documented generator so
//! that byte-identical volumes can be reproduced from any language: the RNG
//! is SplitMix64 (state advances by 0x9E3779B97F4A7C15; output is the
//! two-round mix with constants 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB),
//! and noise values are drawn in storage order — frame-major, then channel,
//! row, column — only for noise channels; blob channels consume no draws.
//!
//! The `oracle_*` functions are deliberately naive re-implementations used
//! to cross-check the production routes: direct per-cell summation instead
//! of summed-area tables, dense 3-D convolution instead of separable passes,
//! exhaustive matching instead of greedy. They share contracts with the
//! production code but no code paths.

use crate::error::{Error, Result};
use crate::events::{Event, EventSet};
use crate::geom::{GridRect, Rect};
use crate::tensor::FeatureVolume;

/// SplitMix64: tiny, seedable, and stable across platforms and versions.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1), using 24 bits so the value is exact in f32.
    pub fn next_f32(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 / 16_777_216.0
    }

    /// Uniform in [0, 1) with 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / 9_007_199_254_740_992.0
    }
}

/// Blob path across frames, along the width axis at the vertical center.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trajectory {
    /// Blob parked at the grid center.
    Static,
    /// Constant velocity from the left margin (2σ inside the edge);
    /// configs whose blob box would leave the grid are rejected.
    Linear,
    /// Triangle wave between margins 2σ inside the width edges, so the
    /// blob box never clips. Each interior turnaround frame emits one
    /// ground-truth event.
    Bounce,
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub seed: u64,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Gaussian blob sigma, in grid cells.
    pub blob_sigma: f64,
    pub trajectory: Trajectory,
    /// Cells per frame; magnitude is what matters for `Bounce`.
    pub velocity: f64,
    /// Uniform noise amplitude: noise channels hold values in [0, noise).
    pub noise: f64,
    /// Fraction of channels carrying the blob, (0, 1]. At least one channel
    /// is always active.
    pub active_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            frames: 20,
            height: 12,
            width: 12,
            channels: 8,
            blob_sigma: 1.2,
            trajectory: Trajectory::Bounce,
            velocity: 1.0,
            noise: 0.0,
            active_fraction: 0.25,
        }
    }
}

/// Everything a test needs to score the pipeline on a generated scene.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Blob center per frame, grid-cell coordinates.
    pub centers: Vec<(f64, f64)>,
    /// Blob bounding box per frame (center ± 2σ clipped to the grid),
    /// grid-cell units.
    pub boxes: Vec<Rect>,
    /// Turnaround events for `Bounce`; empty for the other trajectories.
    /// Single foreground class, label 1 ("bounce").
    pub events: EventSet,
}

/// Renders a scene: the first `max(1, round(fraction·d))` channels hold a
/// Gaussian bump centered on the trajectory, the rest i.i.d. uniform noise.
pub fn gen_scene(cfg: &SynthConfig) -> Result<(FeatureVolume, GroundTruth)> {
    validate_config(cfg)?;
    let (w, h, l, d) = (cfg.width, cfg.height, cfg.frames, cfg.channels);
    let centers = trajectory_centers(cfg)?;

    let active = ((cfg.active_fraction * d as f64).round() as usize).clamp(1, d);
    let inv_two_sigma_sq = 1.0 / (2.0 * cfg.blob_sigma * cfg.blob_sigma);

    let mut rng = SplitMix64::new(cfg.seed);
    let mut data = Vec::with_capacity(l * d * h * w);
    for &(cx, cy) in &centers {
        for c in 0..d {
            if c < active {
                for y in 0..h {
                    for x in 0..w {
                        let dx = x as f64 - cx;
                        let dy = y as f64 - cy;
                        let v = (-(dx * dx + dy * dy) * inv_two_sigma_sq).exp();
                        data.push(v as f32);
                    }
                }
            } else {
                for _ in 0..h * w {
                    data.push(cfg.noise as f32 * rng.next_f32());
                }
            }
        }
    }

    let boxes = centers
        .iter()
        .map(|&(cx, cy)| blob_box(cx, cy, cfg.blob_sigma, w, h))
        .collect();
    let events = EventSet {
        video: format!("synth-{}", cfg.seed),
        classes: 1,
        events: reversal_frames(&centers)
            .into_iter()
            .map(|frame| Event {
                frame,
                class: 1,
                score: None,
            })
            .collect(),
    };

    let volume = FeatureVolume::new(l, d, h, w, data)?;
    Ok((
        volume,
        GroundTruth {
            centers,
            boxes,
            events,
        },
    ))
}

fn validate_config(cfg: &SynthConfig) -> Result<()> {
    if cfg.frames == 0 || cfg.height == 0 || cfg.width == 0 || cfg.channels == 0 {
        return Err(Error::InvalidParam {
            name: "scene shape",
            msg: "frames, height, width, channels must all be >= 1".into(),
        });
    }
    if !(cfg.blob_sigma > 0.0) {
        return Err(Error::InvalidParam {
            name: "blob_sigma",
            msg: format!("{} must be > 0", cfg.blob_sigma),
        });
    }
    // The blob's ±2σ box must fit the grid wherever the center can go.
    let margin = 2.0 * cfg.blob_sigma;
    if cfg.width as f64 - 1.0 < 2.0 * margin || cfg.height as f64 - 1.0 < 2.0 * margin {
        return Err(Error::InvalidParam {
            name: "blob_sigma",
            msg: format!(
                "blob box (±{margin} cells) does not fit a {}x{} grid",
                cfg.width, cfg.height
            ),
        });
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(Error::InvalidParam {
            name: "noise",
            msg: format!("{} must be finite and >= 0", cfg.noise),
        });
    }
    if !(cfg.active_fraction > 0.0 && cfg.active_fraction <= 1.0) {
        return Err(Error::InvalidParam {
            name: "active_fraction",
            msg: format!("{} outside (0, 1]", cfg.active_fraction),
        });
    }
    if !cfg.velocity.is_finite() {
        return Err(Error::InvalidParam {
            name: "velocity",
            msg: "must be finite".into(),
        });
    }
    Ok(())
}

/// Trajectories confine the blob center to `[2σ, axis − 1 − 2σ]` so the
/// ground-truth box never clips against the grid: linear starts at the
/// margin and is rejected once the box would leave; bounce is a triangle
/// wave folding at both margins.
fn trajectory_centers(cfg: &SynthConfig) -> Result<Vec<(f64, f64)>> {
    let cy = (cfg.height as f64 - 1.0) / 2.0;
    let margin = 2.0 * cfg.blob_sigma;
    let lo = margin;
    let hi = cfg.width as f64 - 1.0 - margin;
    let amplitude = hi - lo;
    let mut centers = Vec::with_capacity(cfg.frames);
    for l in 0..cfg.frames {
        let cx = match cfg.trajectory {
            Trajectory::Static => (cfg.width as f64 - 1.0) / 2.0,
            Trajectory::Linear => {
                let x = lo + cfg.velocity * l as f64;
                if x < lo || x > hi {
                    return Err(Error::BlobLeavesGrid {
                        frame: l,
                        pos: x,
                        len: cfg.width,
                    });
                }
                x
            }
            Trajectory::Bounce => {
                if amplitude <= 0.0 {
                    lo
                } else {
                    let phase = (cfg.velocity.abs() * l as f64).rem_euclid(2.0 * amplitude);
                    lo + amplitude - (phase - amplitude).abs()
                }
            }
        };
        centers.push((cx, cy));
    }
    Ok(centers)
}

/// Interior frames where the discrete direction of motion flips sign.
pub fn reversal_frames(centers: &[(f64, f64)]) -> Vec<usize> {
    let mut out = Vec::new();
    for l in 1..centers.len().saturating_sub(1) {
        let before = centers[l].0 - centers[l - 1].0;
        let after = centers[l + 1].0 - centers[l].0;
        if before * after < 0.0 {
            out.push(l);
        }
    }
    out
}

fn blob_box(cx: f64, cy: f64, sigma: f64, w: usize, h: usize) -> Rect {
    let x0 = (cx - 2.0 * sigma).max(0.0);
    let x1 = (cx + 2.0 * sigma).min(w as f64 - 1.0);
    let y0 = (cy - 2.0 * sigma).max(0.0);
    let y1 = (cy + 2.0 * sigma).min(h as f64 - 1.0);
    Rect {
        x: x0,
        y: y0,
        w: x1 - x0,
        h: y1 - y0,
    }
}

// ---------------------------------------------------------------------------
// Brute-force references
// ---------------------------------------------------------------------------

/// Exhaustive minimal-mass-rectangle search by direct per-cell summation.
///
/// Same selection contract as the production search — candidate sizes start
/// at `(min_w, min_h)` and grow the width by `scale_step` with
/// `h = round(w / aspect)`; the first size whose best window reaches
/// `min(tau, total − 1e-9)` wins, placed at the earliest row-major position
/// of maximum mass; if no size qualifies, the largest centered
/// aspect-correct rectangle is returned — but computed without a
/// summed-area table so the two routes share no arithmetic.
///
/// Panics if the minimum size does not fit the grid; tests only call it on
/// valid configurations.
#[allow(clippy::too_many_arguments)]
pub fn oracle_min_rect(
    map: &[f32],
    width: usize,
    height: usize,
    tau: f64,
    min_w: usize,
    min_h: usize,
    aspect: f64,
    scale_step: usize,
) -> GridRect {
    assert!(min_w >= 1 && min_h >= 1 && min_w <= width && min_h <= height);
    assert!(scale_step >= 1 && aspect > 0.0);
    assert_eq!(map.len(), width * height);

    let mut total = 0.0f64;
    for &v in map {
        total += v as f64;
    }
    let threshold = tau.min(total - 1e-9);

    let mut w = min_w;
    let mut h = min_h;
    loop {
        if w > width || h > height {
            break;
        }
        let mut best_mass = f64::NEG_INFINITY;
        let mut best = (0usize, 0usize);
        for y in 0..=height - h {
            for x in 0..=width - w {
                let mut mass = 0.0f64;
                for yy in y..y + h {
                    for xx in x..x + w {
                        mass += map[yy * width + xx] as f64;
                    }
                }
                if mass > best_mass {
                    best_mass = mass;
                    best = (x, y);
                }
            }
        }
        if best_mass >= threshold {
            return GridRect {
                x: best.0,
                y: best.1,
                w,
                h,
            };
        }
        w += scale_step;
        h = ((w as f64 / aspect).round() as usize).max(1);
    }

    // Nothing reached the threshold: largest centered aspect-correct rect.
    let (w, h) = largest_aspect_rect(width, height, aspect);
    GridRect {
        x: (width - w) / 2,
        y: (height - h) / 2,
        w,
        h,
    }
}

/// Largest `w × round(w / aspect)` rectangle fitting `width × height`.
pub fn largest_aspect_rect(width: usize, height: usize, aspect: f64) -> (usize, usize) {
    let h_at_full_width = ((width as f64 / aspect).round() as usize).max(1);
    if h_at_full_width <= height {
        (width, h_at_full_width)
    } else {
        let w = ((height as f64 * aspect).round() as usize).clamp(1, width);
        (w, height)
    }
}

/// Dense 3-D Gaussian convolution over a `frames × height × width` volume
/// with replicated borders; the separable production path must match this
/// within float tolerance. `sigma_t = 0` applies no temporal extent.
pub fn oracle_conv3d(
    data: &[f32],
    frames: usize,
    height: usize,
    width: usize,
    sigma_s: f64,
    sigma_t: f64,
) -> Vec<f32> {
    assert_eq!(data.len(), frames * height * width);
    // Kernels are built here from the documented weight formula,
    // independently of the production implementation.
    let ks = dense_kernel(sigma_s);
    let kt = if sigma_t == 0.0 {
        vec![1.0]
    } else {
        dense_kernel(sigma_t)
    };
    let rs = (ks.len() - 1) / 2;
    let rt = (kt.len() - 1) / 2;

    let clamp = |v: isize, n: usize| -> usize { v.clamp(0, n as isize - 1) as usize };
    let mut out = vec![0.0f32; data.len()];
    for l in 0..frames {
        for y in 0..height {
            for x in 0..width {
                let mut acc = 0.0f64;
                for (it, &wt) in kt.iter().enumerate() {
                    let sl = clamp(l as isize + it as isize - rt as isize, frames);
                    for (iy, &wy) in ks.iter().enumerate() {
                        let sy = clamp(y as isize + iy as isize - rs as isize, height);
                        for (ix, &wx) in ks.iter().enumerate() {
                            let sx = clamp(x as isize + ix as isize - rs as isize, width);
                            let v = data[(sl * height + sy) * width + sx] as f64;
                            acc += wt * wy * wx * v;
                        }
                    }
                }
                out[(l * height + y) * width + x] = acc as f32;
            }
        }
    }
    out
}

fn dense_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0);
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
    k
}

/// Maximum number of detection ↔ ground-truth pairs under the matching
/// constraints (same class, |Δframe| ≤ delta, each side used once), found
/// exhaustively. Greedy matching can never exceed this. Intended for small
/// instances; the ground-truth side must have at most 16 events.
pub fn oracle_opt_match(dets: &[Event], gt: &[Event], delta: usize) -> usize {
    assert!(gt.len() <= 16, "exhaustive matcher is for small instances");
    let compatible: Vec<Vec<usize>> = dets
        .iter()
        .map(|d| {
            gt.iter()
                .enumerate()
                .filter(|(_, g)| {
                    g.class == d.class && d.frame.abs_diff(g.frame) <= delta
                })
                .map(|(j, _)| j)
                .collect()
        })
        .collect();

    let masks = 1usize << gt.len();
    // memo[i][mask]: best additional matches using dets i.. with `mask` of
    // ground truth already consumed.
    let mut memo = vec![vec![usize::MAX; masks]; dets.len() + 1];
    fn solve(
        i: usize,
        mask: usize,
        compatible: &[Vec<usize>],
        memo: &mut [Vec<usize>],
    ) -> usize {
        if i == compatible.len() {
            return 0;
        }
        if memo[i][mask] != usize::MAX {
            return memo[i][mask];
        }
        let mut best = solve(i + 1, mask, compatible, memo); // leave det i unmatched
        for &j in &compatible[i] {
            if mask & (1 << j) == 0 {
                best = best.max(1 + solve(i + 1, mask | (1 << j), compatible, memo));
            }
        }
        memo[i][mask] = best;
        best
    }
    solve(0, 0, &compatible, &mut memo)
}
