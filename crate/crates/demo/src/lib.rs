//! Wasm bindings for the browser playground: a stateful scene explorer
//! plus two stateless helpers for the suppression and cost panels.
//!
//! Everything returned to JS is a plain buffer or a JSON string; the page
//! owns all drawing. Inputs are clamped to valid ranges instead of
//! erroring — a slider UI has no use for a Result.

use wasm_bindgen::prelude::*;

use spotkit::eval;
use spotkit::geom::{FrameGeometry, Rect};
use spotkit::roi::{self, RoiConfig, RoiTrack};
use spotkit::saliency::{self, SaliencyConfig};
use spotkit::spotting;
use spotkit::synth::{self, GroundTruth, SynthConfig, Trajectory};
use spotkit::tensor::{FeatureVolume, SaliencyVolume};

/// Continuous upsampled-space position of grid cell-index coordinate `g`.
fn ups(g: f64, k: usize) -> f64 {
    g * k as f64 + (k as f64 - 1.0) / 2.0 + 0.5
}

/// Four-stop blue→teal→green→yellow ramp over [0, 1].
fn heat(v: f32) -> [u8; 3] {
    const STOPS: [(f32, [f32; 3]); 4] = [
        (0.0, [18.0, 24.0, 68.0]),
        (0.35, [23.0, 126.0, 137.0]),
        (0.7, [80.0, 190.0, 94.0]),
        (1.0, [248.0, 230.0, 90.0]),
    ];
    let v = v.clamp(0.0, 1.0);
    let mut lo = STOPS[0];
    for hi in STOPS.iter().skip(1) {
        if v <= hi.0 {
            let t = (v - lo.0) / (hi.0 - lo.0);
            return [
                (lo.1[0] + t * (hi.1[0] - lo.1[0])) as u8,
                (lo.1[1] + t * (hi.1[1] - lo.1[1])) as u8,
                (lo.1[2] + t * (hi.1[2] - lo.1[2])) as u8,
            ];
        }
        lo = *hi;
    }
    [248, 230, 90]
}

fn rgba_from(values: impl Iterator<Item = f32>) -> Vec<u8> {
    let mut out = Vec::new();
    for v in values {
        let [r, g, b] = heat(v);
        out.extend_from_slice(&[r, g, b, 255]);
    }
    out
}

/// Scene and pipeline state behind the explorer panel. Every setter
/// rebuilds whatever depends on it; the getters only read.
#[wasm_bindgen]
pub struct Explorer {
    scene: SynthConfig,
    pipeline: SaliencyConfig,
    selection: RoiConfig,
    frame_px: usize,
    fv: FeatureVolume,
    gt: GroundTruth,
    sv: SaliencyVolume,
    track: RoiTrack,
}

impl Explorer {
    fn rebuild(&mut self) {
        let (fv, gt) = synth::gen_scene(&self.scene).expect("clamped scene config");
        self.fv = fv;
        self.gt = gt;
        self.rebuild_pipeline();
    }

    fn rebuild_pipeline(&mut self) {
        self.sv = saliency::build_saliency(&self.fv, &self.pipeline).expect("clamped pipeline config");
        let geom = FrameGeometry::new(self.sv.width, self.sv.height, self.frame_px, self.frame_px)
            .expect("frame clamped to at least the grid");
        self.track = roi::select_rois(&self.sv, &self.selection, &geom).expect("clamped selection config");
    }

    fn scale(&self) -> f64 {
        self.track.geometry.scale_x()
    }

    /// Selected window of one frame, in upsampled-cell units.
    fn window_rect(&self, frame: usize) -> Rect {
        let r = &self.track.rois[frame];
        let s = self.scale();
        Rect {
            x: r.x as f64 / s,
            y: r.y as f64 / s,
            w: r.w as f64 / s,
            h: r.h as f64 / s,
        }
    }

    /// Blob box of one frame, in upsampled-cell units.
    fn blob_rect(&self, frame: usize) -> Rect {
        let b = &self.gt.boxes[frame];
        let k = self.pipeline.k;
        Rect {
            x: ups(b.x, k),
            y: ups(b.y, k),
            w: b.w * k as f64,
            h: b.h * k as f64,
        }
    }

    fn center_error(&self, frame: usize) -> f64 {
        let w = self.window_rect(frame);
        let (gx, gy) = self.gt.centers[frame];
        let k = self.pipeline.k;
        (w.x + w.w / 2.0 - ups(gx, k))
            .abs()
            .max((w.y + w.h / 2.0 - ups(gy, k)).abs())
    }
}

#[wasm_bindgen]
impl Explorer {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Explorer {
        let scene = SynthConfig {
            noise: 0.3,
            ..Default::default()
        };
        let pipeline = SaliencyConfig {
            k: 8,
            sigma_s: 2.0,
            sigma_t: 1.5,
            epsilon: 1e-9,
        };
        let selection = RoiConfig {
            tau: 0.3,
            min_w: 112,
            min_h: 112,
            scale_step: 1,
        };
        let (fv, gt) = synth::gen_scene(&scene).expect("default scene");
        let mut e = Explorer {
            scene,
            pipeline,
            selection,
            frame_px: 448,
            fv,
            gt,
            // Placeholders; rebuild_pipeline replaces both.
            sv: SaliencyVolume::new(1, 1, 1, vec![1.0], spotkit::tensor::Stage::Probability)
                .unwrap(),
            track: RoiTrack {
                geometry: FrameGeometry::new(1, 1, 1, 1).unwrap(),
                rois: vec![],
            },
        };
        e.rebuild_pipeline();
        e
    }

    pub fn set_scene(&mut self, seed: u32, frames: usize, velocity: f64, noise: f64) {
        self.scene.seed = seed as u64;
        self.scene.frames = frames.clamp(2, 400);
        self.scene.trajectory = Trajectory::Bounce;
        self.scene.velocity = velocity.clamp(0.0, 3.0);
        self.scene.noise = noise.clamp(0.0, 1.0);
        self.rebuild();
    }

    pub fn set_pipeline(
        &mut self,
        k: usize,
        sigma_s: f64,
        sigma_t: f64,
        tau: f64,
        min_roi_px: usize,
    ) {
        self.pipeline.k = k.clamp(1, 12);
        self.pipeline.sigma_s = sigma_s.clamp(0.05, 6.0);
        self.pipeline.sigma_t = sigma_t.clamp(0.0, 5.0);
        self.selection.tau = tau.clamp(0.0, 1.0);
        let floor = (self.frame_px as f64 / (self.scene.width * self.pipeline.k) as f64).ceil()
            as usize;
        let px = min_roi_px.clamp(floor.max(1), self.frame_px);
        self.selection.min_w = px;
        self.selection.min_h = px;
        self.rebuild_pipeline();
    }

    pub fn frames(&self) -> usize {
        self.scene.frames
    }

    /// Side length of the upsampled saliency grid (square scenes).
    pub fn grid(&self) -> usize {
        self.sv.width
    }

    /// Side length of the raw feature grid.
    pub fn feature_grid(&self) -> usize {
        self.scene.width
    }

    /// Channel-averaged features of one frame as RGBA, feature-grid sized,
    /// normalized per frame for display.
    pub fn features_rgba(&self, frame: usize) -> Vec<u8> {
        let frame = frame.min(self.scene.frames - 1);
        let avg = saliency::channel_average(&self.fv).expect("valid volume");
        let row = avg.frame(frame);
        let max = row.iter().cloned().fold(f32::MIN, f32::max).max(1e-12);
        rgba_from(row.iter().map(|&v| v / max))
    }

    /// Probability saliency of one frame as RGBA, upsampled-grid sized,
    /// normalized by the frame's peak for display.
    pub fn saliency_rgba(&self, frame: usize) -> Vec<u8> {
        let frame = frame.min(self.scene.frames - 1);
        let row = self.sv.frame(frame);
        let max = row.iter().cloned().fold(f32::MIN, f32::max).max(1e-12);
        rgba_from(row.iter().map(|&v| v / max))
    }

    /// Window, blob box, centers, and scores of one frame, all in
    /// upsampled-cell units ready to scale onto the canvas.
    pub fn overlay_json(&self, frame: usize) -> String {
        let frame = frame.min(self.scene.frames - 1);
        let w = self.window_rect(frame);
        let b = self.blob_rect(frame);
        let (gx, gy) = self.gt.centers[frame];
        let k = self.pipeline.k;
        serde_json::json!({
            "window": {"x": w.x, "y": w.y, "w": w.w, "h": w.h},
            "blob": {"x": b.x, "y": b.y, "w": b.w, "h": b.h},
            "center": [ups(gx, k), ups(gy, k)],
            "iou": w.iou(&b),
            "center_error": self.center_error(frame),
        })
        .to_string()
    }

    /// Per-frame center error and IoU plus the scene's turnaround frames —
    /// everything the timeline strip plots.
    pub fn track_json(&self) -> String {
        let errors: Vec<f64> = (0..self.scene.frames).map(|l| self.center_error(l)).collect();
        let ious: Vec<f64> = (0..self.scene.frames)
            .map(|l| self.window_rect(l).iou(&self.blob_rect(l)))
            .collect();
        let events: Vec<usize> = self.gt.events.events.iter().map(|e| e.frame).collect();
        let areas: Vec<f64> = (0..self.scene.frames)
            .map(|l| {
                let w = self.window_rect(l);
                (w.w * w.h) / (self.sv.width as f64 * self.sv.height as f64)
            })
            .collect();
        serde_json::json!({
            "errors": errors,
            "ious": ious,
            "events": events,
            "area_fraction": areas,
        })
        .to_string()
    }
}

impl Default for Explorer {
    fn default() -> Self {
        Self::new()
    }
}

/// Runs 1-D suppression over one class track and returns the surviving
/// detections as JSON `[{frame, score}]`. Scores are clamped into [0, 1].
#[wasm_bindgen]
pub fn nms_detections(scores: Vec<f64>, window: usize, soft: bool, score_floor: f64) -> String {
    let scores: Vec<f32> = scores.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect();
    if scores.is_empty() {
        return "[]".into();
    }
    let floor = score_floor.clamp(0.0, 1.0);
    let dets = if soft {
        spotting::soft_nms_1d(&scores, window, floor)
    } else {
        spotting::hard_nms_1d(&scores, window, floor)
    }
    .expect("clamped scores");
    let items: Vec<serde_json::Value> = dets
        .iter()
        .map(|d| serde_json::json!({"frame": d.frame, "score": d.score}))
        .collect();
    serde_json::Value::Array(items).to_string()
}

/// Area-ratio cost model: processed resolutions against a reference,
/// optionally scaled by the reference cost in GFLOPs. Returns JSON
/// `{ratio, gflops}`. Zero-sized entries are dropped.
#[wasm_bindgen]
pub fn cost_estimate(
    widths: Vec<f64>,
    heights: Vec<f64>,
    ref_w: f64,
    ref_h: f64,
    gflops: f64,
) -> String {
    let res: Vec<(usize, usize)> = widths
        .iter()
        .zip(&heights)
        .map(|(&w, &h)| (w.max(0.0) as usize, h.max(0.0) as usize))
        .filter(|&(w, h)| w > 0 && h > 0)
        .collect();
    let reference = ((ref_w.max(1.0)) as usize, (ref_h.max(1.0)) as usize);
    match eval::cost_ratio(&res, reference) {
        Ok(ratio) => serde_json::json!({
            "ratio": ratio,
            "gflops": if gflops > 0.0 { Some(gflops * ratio) } else { None },
        })
        .to_string(),
        Err(e) => serde_json::json!({ "error": e.to_string() }).to_string(),
    }
}
