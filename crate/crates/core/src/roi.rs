//! Minimal-rectangle region selection on probability saliency maps, and the
//! geometry to carry the result into high-resolution pixel space.
//!
//! The search is a size-ascending sliding window over a summed-area table:
//! exact under the grid discretization and cheap enough to run per frame.
//! Candidate sizes grow the width by `scale_step` cells with the height tied
//! to the fixed aspect; ties between equally heavy windows go to the
//! earliest row-major position so results are deterministic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{FrameGeometry, GridRect, Roi};
use crate::tensor::{FeatureVolume, SaliencyVolume, Stage, PROB_SUM_TOL};

/// Slack subtracted from the total mass when τ asks for everything: float
/// summation cannot be trusted to reproduce "all of it" exactly.
pub const MASS_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiConfig {
    /// Cumulative-mass threshold in [0, 1]. 0 pins the minimum size.
    pub tau: f64,
    /// Minimum crop width in pixels.
    pub min_w: usize,
    /// Minimum crop height in pixels.
    pub min_h: usize,
    /// Width-growth granularity of the size search, in grid cells.
    pub scale_step: usize,
}

impl RoiConfig {
    /// Fixed crop aspect ratio, width over height.
    pub fn aspect(&self) -> f64 {
        self.min_w as f64 / self.min_h as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) || !self.tau.is_finite() {
            return Err(Error::InvalidParam {
                name: "tau",
                msg: format!("{} outside [0, 1]", self.tau),
            });
        }
        if self.min_w == 0 || self.min_h == 0 {
            return Err(Error::InvalidParam {
                name: "min_roi",
                msg: "minimum size must be at least 1×1 pixels".into(),
            });
        }
        if self.scale_step == 0 {
            return Err(Error::InvalidParam {
                name: "scale_step",
                msg: "must be >= 1 grid cell".into(),
            });
        }
        Ok(())
    }
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self {
            tau: 0.3,
            min_w: 112,
            min_h: 112,
            scale_step: 1,
        }
    }
}

/// Per-frame crop regions plus the geometry they were derived under.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiTrack {
    pub geometry: FrameGeometry,
    pub rois: Vec<Roi>,
}

/// Summed-area table over one `height × width` map: any rectangle mass in
/// four lookups. Accumulates in f64 so query error stays far below the
/// thresholds compared against it.
#[derive(Debug, Clone)]
pub struct SummedAreaTable {
    width: usize,
    height: usize,
    /// `(height + 1) × (width + 1)`, row-major; first row/column zero.
    sat: Vec<f64>,
}

impl SummedAreaTable {
    pub fn build(map: &[f32], width: usize, height: usize) -> Self {
        assert_eq!(map.len(), width * height, "map length must match dims");
        let stride = width + 1;
        let mut sat = vec![0.0f64; (height + 1) * stride];
        for y in 0..height {
            let mut row_sum = 0.0f64;
            for x in 0..width {
                row_sum += map[y * width + x] as f64;
                sat[(y + 1) * stride + (x + 1)] = sat[y * stride + (x + 1)] + row_sum;
            }
        }
        Self { width, height, sat }
    }

    /// Mass of the rectangle with top-left `(x, y)` and size `w × h`.
    /// Empty rectangles have mass 0.
    pub fn mass(&self, x: usize, y: usize, w: usize, h: usize) -> f64 {
        debug_assert!(x + w <= self.width && y + h <= self.height);
        let s = self.width + 1;
        self.sat[(y + h) * s + (x + w)] + self.sat[y * s + x]
            - self.sat[y * s + (x + w)]
            - self.sat[(y + h) * s + x]
    }

    pub fn total(&self) -> f64 {
        self.mass(0, 0, self.width, self.height)
    }
}

/// Candidate sizes: `(min_w, min_h)`, then width + `step` with
/// `h = round(w / aspect)`, while both extents fit. Area strictly increases
/// along the ladder.
fn size_ladder(
    min_w: usize,
    min_h: usize,
    aspect: f64,
    step: usize,
    width: usize,
    height: usize,
) -> Vec<(usize, usize)> {
    let mut sizes = Vec::new();
    let mut w = min_w;
    let mut h = min_h;
    while w <= width && h <= height {
        sizes.push((w, h));
        w += step;
        h = ((w as f64 / aspect).round() as usize).max(1);
    }
    sizes
}

/// Largest `w × round(w/aspect)` rectangle fitting the grid, centered.
fn full_frame_rect(width: usize, height: usize, aspect: f64) -> GridRect {
    let h_at_full = ((width as f64 / aspect).round() as usize).max(1);
    let (w, h) = if h_at_full <= height {
        (width, h_at_full)
    } else {
        let w = ((height as f64 * aspect).round() as usize).clamp(1, width);
        (w, height)
    };
    GridRect {
        x: (width - w) / 2,
        y: (height - h) / 2,
        w,
        h,
    }
}

/// Smallest aspect-fixed rectangle whose mass reaches
/// `min(tau, total − MASS_SLACK)`.
///
/// Sizes are tried in increasing area; within a size, every position is
/// scanned and the earliest row-major position of maximum mass is kept.
/// The first size whose best window reaches the threshold wins. If none
/// does, the largest centered aspect-correct rectangle is returned.
#[allow(clippy::too_many_arguments)]
pub fn min_mass_rect(
    map: &[f32],
    width: usize,
    height: usize,
    tau: f64,
    min_w: usize,
    min_h: usize,
    aspect: f64,
    scale_step: usize,
) -> Result<GridRect> {
    if map.len() != width * height {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} map", width, height),
            found: format!("{} values", map.len()),
        });
    }
    if min_w == 0 || min_h == 0 || min_w > width || min_h > height {
        return Err(Error::InvalidParam {
            name: "min_size",
            msg: format!("{min_w}x{min_h} does not fit {width}x{height} grid"),
        });
    }
    if !(0.0..=1.0).contains(&tau) || scale_step == 0 || !(aspect > 0.0) {
        return Err(Error::InvalidParam {
            name: "search",
            msg: format!("tau {tau}, aspect {aspect}, scale_step {scale_step}"),
        });
    }
    let sat = SummedAreaTable::build(map, width, height);
    let total = sat.total();
    if (total - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::NotNormalized {
            frame: 0,
            sum: total,
            tol: PROB_SUM_TOL,
        });
    }
    let threshold = tau.min(total - MASS_SLACK);

    for (w, h) in size_ladder(min_w, min_h, aspect, scale_step, width, height) {
        let mut best_mass = f64::NEG_INFINITY;
        let mut best = (0usize, 0usize);
        for y in 0..=height - h {
            for x in 0..=width - w {
                let m = sat.mass(x, y, w, h);
                if m > best_mass {
                    best_mass = m;
                    best = (x, y);
                }
            }
        }
        if best_mass >= threshold {
            return Ok(GridRect {
                x: best.0,
                y: best.1,
                w,
                h,
            });
        }
    }
    Ok(full_frame_rect(width, height, aspect))
}

/// Maps a grid rect to frame pixels: per-coordinate round-half-up scaling,
/// then a shift (never a shrink) to stay inside the frame.
///
/// Each product is formed before dividing — `round(x·W_h / W_g)` — so exact
/// rational scales stay exact instead of picking up two roundings.
pub fn grid_to_frame(rect: &GridRect, geom: &FrameGeometry) -> Result<Roi> {
    if rect.w == 0
        || rect.h == 0
        || rect.x + rect.w > geom.grid_w
        || rect.y + rect.h > geom.grid_h
    {
        return Err(Error::InvalidParam {
            name: "rect",
            msg: format!("{rect:?} outside {}x{} grid", geom.grid_w, geom.grid_h),
        });
    }
    let scale = |v: usize, frame: usize, grid: usize| -> usize {
        ((v * frame) as f64 / grid as f64).round() as usize
    };
    let w = scale(rect.w, geom.frame_w, geom.grid_w).max(1);
    let h = scale(rect.h, geom.frame_h, geom.grid_h).max(1);
    let mut x = scale(rect.x, geom.frame_w, geom.grid_w);
    let mut y = scale(rect.y, geom.frame_h, geom.grid_h);
    // w ≤ frame_w by construction (rect.w ≤ grid_w), so shifting suffices.
    if x + w > geom.frame_w {
        x = geom.frame_w - w;
    }
    if y + h > geom.frame_h {
        y = geom.frame_h - h;
    }
    Ok(Roi { x, y, w, h })
}

/// Picks one RoI per frame: the minimal-mass rectangle on the saliency grid,
/// carried to pixel coordinates.
///
/// The pixel-space minimum size crosses to the grid through the inverse
/// scaling with ceil — rounding down could produce crops below the
/// `min_w × min_h` floor after the forward mapping. On anisotropic
/// geometries the aspect the grid search uses is likewise the pixel aspect
/// re-expressed in grid cells, so the final Roi honors the configured pixel
/// aspect, not the grid's.
pub fn select_rois(
    sv: &SaliencyVolume,
    cfg: &RoiConfig,
    geom: &FrameGeometry,
) -> Result<RoiTrack> {
    sv.require_stage(Stage::Probability)?;
    cfg.validate()?;
    if sv.width != geom.grid_w || sv.height != geom.grid_h {
        return Err(Error::ShapeMismatch {
            expected: format!("saliency grid {}x{}", geom.grid_w, geom.grid_h),
            found: format!("{}x{}", sv.width, sv.height),
        });
    }
    let sx = geom.scale_x();
    let sy = geom.scale_y();
    let grid_min_w = ((cfg.min_w as f64 / sx).ceil() as usize).max(1);
    let grid_min_h = ((cfg.min_h as f64 / sy).ceil() as usize).max(1);
    if grid_min_w > geom.grid_w || grid_min_h > geom.grid_h {
        return Err(Error::InvalidParam {
            name: "min_roi",
            msg: format!(
                "{}x{} pixels needs {grid_min_w}x{grid_min_h} grid cells, grid is {}x{}",
                cfg.min_w, cfg.min_h, geom.grid_w, geom.grid_h
            ),
        });
    }
    let grid_aspect = (cfg.min_w as f64 / sx) / (cfg.min_h as f64 / sy);

    let rois = (0..sv.frames)
        .into_par_iter()
        .map(|l| {
            let rect = min_mass_rect(
                sv.frame(l),
                sv.width,
                sv.height,
                cfg.tau,
                grid_min_w,
                grid_min_h,
                grid_aspect,
                cfg.scale_step,
            )?;
            grid_to_frame(&rect, geom)
        })
        .collect::<Result<Vec<Roi>>>()?;
    Ok(RoiTrack {
        geometry: *geom,
        rois,
    })
}

/// Bilinear crop-and-resize of one frame's channels to `out_w × out_h`,
/// with the same half-pixel convention as the saliency upsampler: output
/// column `u` samples source `roi.x + (u + 0.5)·roi.w/out_w − 0.5`, clamped
/// to the RoI. A RoI already at the output size copies bit-exactly.
///
/// Returns `channels × out_h × out_w`, row-major.
pub fn crop_resize_frame(
    fv: &FeatureVolume,
    frame: usize,
    roi: &Roi,
    out_w: usize,
    out_h: usize,
) -> Result<Vec<f32>> {
    if frame >= fv.frames {
        return Err(Error::InvalidParam {
            name: "frame",
            msg: format!("{frame} beyond clip length {}", fv.frames),
        });
    }
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidParam {
            name: "out_size",
            msg: "output must be at least 1×1".into(),
        });
    }
    if !roi.fits(fv.width, fv.height) {
        return Err(Error::InvalidParam {
            name: "roi",
            msg: format!("{roi:?} outside {}x{} frame", fv.width, fv.height),
        });
    }

    let axis = |out_len: usize, off: usize, ext: usize| -> Vec<(usize, usize, f64)> {
        let scale = ext as f64 / out_len as f64;
        (0..out_len)
            .map(|u| {
                let x = (off as f64 + (u as f64 + 0.5) * scale - 0.5)
                    .clamp(off as f64, (off + ext - 1) as f64);
                let i0 = x.floor() as usize;
                let i1 = (i0 + 1).min(off + ext - 1);
                (i0, i1, x - i0 as f64)
            })
            .collect()
    };
    let xs = axis(out_w, roi.x, roi.w);
    let ys = axis(out_h, roi.y, roi.h);

    let w = fv.width;
    let mut out = Vec::with_capacity(fv.channels * out_h * out_w);
    for c in 0..fv.channels {
        let plane = fv.plane(frame, c);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let v00 = plane[y0 * w + x0] as f64;
                let v01 = plane[y0 * w + x1] as f64;
                let v10 = plane[y1 * w + x0] as f64;
                let v11 = plane[y1 * w + x1] as f64;
                let top = v00 + (v01 - v00) * fx;
                let bot = v10 + (v11 - v10) * fx;
                out.push((top + (bot - top) * fy) as f32);
            }
        }
    }
    Ok(out)
}

/// Crops every frame of a clip through its per-frame RoI; output clip is
/// `frames × channels × out_h × out_w`.
pub fn crop_resize_clip(
    fv: &FeatureVolume,
    rois: &[Roi],
    out_w: usize,
    out_h: usize,
) -> Result<FeatureVolume> {
    if rois.len() != fv.frames {
        return Err(Error::ShapeMismatch {
            expected: format!("{} rois, one per frame", fv.frames),
            found: format!("{}", rois.len()),
        });
    }
    let per_frame: Vec<Vec<f32>> = (0..fv.frames)
        .into_par_iter()
        .map(|l| crop_resize_frame(fv, l, &rois[l], out_w, out_h))
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(fv.frames * fv.channels * out_h * out_w);
    for frame in per_frame {
        data.extend_from_slice(&frame);
    }
    FeatureVolume::new(fv.frames, fv.channels, out_h, out_w, data)
}
