//! Clip-to-sequence score handling: overlapped-clip aggregation, feature
//! fusion, 1-D non-maximum suppression over frame scores, and the training
//! losses in their inference-checkable form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{Event, EventSet};
use crate::tensor::{FeatureSequence, ScoreSequence};

/// Probabilities are clamped here before `ln`, bounding any single-frame
/// loss term instead of letting a hard zero blow up to infinity.
pub const LN_FLOOR: f64 = 1e-12;

/// Suppression stops once the best remaining score drops below this;
/// detections that weak are noise, and the floor keeps the emission list
/// finite in spirit even when every frame carries some score.
pub const SCORE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmsMode {
    Soft,
    Hard,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmsConfig {
    /// Suppression radius ω in frames; neighbors within it are decayed
    /// (soft) or dropped (hard). 0 suppresses nothing.
    pub window: usize,
    pub mode: NmsMode,
    pub score_floor: f64,
}

impl Default for NmsConfig {
    fn default() -> Self {
        Self {
            window: 2,
            mode: NmsMode::Soft,
            score_floor: SCORE_FLOOR,
        }
    }
}

/// One suppressed-peak detection on a single class track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame: usize,
    pub score: f64,
}

fn check_scores(scores: &[f32]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InvalidParam {
            name: "scores",
            msg: "empty sequence".into(),
        });
    }
    if let Some(i) = scores.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidParam {
            name: "scores",
            msg: format!("{} at frame {i} outside [0, 1]", scores[i]),
        });
    }
    Ok(())
}

/// Index of the maximum remaining score, earliest frame on ties; `None`
/// when everything is consumed.
fn argmax_remaining(scores: &[f64], consumed: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (t, &s) in scores.iter().enumerate() {
        if consumed[t] {
            continue;
        }
        match best {
            Some(b) if scores[b] >= s => {}
            _ => best = Some(t),
        }
    }
    best
}

/// Soft non-maximum suppression with linear decay.
///
/// Repeatedly emits the highest remaining frame (earliest on ties) and
/// rescales unconsumed neighbors within `window` by `|Δt| / (window + 1)`,
/// so immediate neighbors lose the most and the penalty fades linearly with
/// distance. Stops when the best remaining score falls below `score_floor`.
/// With `window = 0` nothing decays and every frame at or above the floor
/// is emitted in score-descending order.
pub fn soft_nms_1d(scores: &[f32], window: usize, score_floor: f64) -> Result<Vec<Detection>> {
    check_scores(scores)?;
    let mut work: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
    let mut consumed = vec![false; work.len()];
    let mut out = Vec::new();
    while let Some(t) = argmax_remaining(&work, &consumed) {
        if work[t] < score_floor {
            break;
        }
        out.push(Detection {
            frame: t,
            score: work[t],
        });
        consumed[t] = true;
        if window > 0 {
            let lo = t.saturating_sub(window);
            let hi = (t + window).min(work.len() - 1);
            for u in lo..=hi {
                if u != t && !consumed[u] {
                    let dist = t.abs_diff(u) as f64;
                    work[u] *= dist / (window as f64 + 1.0);
                }
            }
        }
    }
    Ok(out)
}

/// Hard non-maximum suppression: neighbors within `window` of an emitted
/// peak are removed outright rather than decayed.
pub fn hard_nms_1d(scores: &[f32], window: usize, score_floor: f64) -> Result<Vec<Detection>> {
    check_scores(scores)?;
    let work: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
    let mut consumed = vec![false; work.len()];
    let mut out = Vec::new();
    while let Some(t) = argmax_remaining(&work, &consumed) {
        if work[t] < score_floor {
            break;
        }
        out.push(Detection {
            frame: t,
            score: work[t],
        });
        let lo = t.saturating_sub(window);
        let hi = (t + window).min(work.len() - 1);
        for c in &mut consumed[lo..=hi] {
            *c = true;
        }
        consumed[t] = true; // window = 0 still consumes the peak itself
    }
    Ok(out)
}

/// Runs NMS per foreground class column and merges the surviving peaks
/// into one event set (classes ascending, emission order within a class).
pub fn extract_detections(
    seq: &ScoreSequence,
    cfg: &NmsConfig,
    video: &str,
) -> Result<EventSet> {
    if !(cfg.score_floor >= 0.0) || !cfg.score_floor.is_finite() {
        return Err(Error::InvalidParam {
            name: "score_floor",
            msg: format!("{} must be finite and >= 0", cfg.score_floor),
        });
    }
    let mut events = Vec::new();
    for class in 1..=seq.classes {
        let column = seq.column(class);
        let dets = match cfg.mode {
            NmsMode::Soft => soft_nms_1d(&column, cfg.window, cfg.score_floor)?,
            NmsMode::Hard => hard_nms_1d(&column, cfg.window, cfg.score_floor)?,
        };
        events.extend(dets.into_iter().map(|d| Event {
            frame: d.frame,
            class,
            score: Some(d.score),
        }));
    }
    Ok(EventSet {
        video: video.to_string(),
        classes: seq.classes,
        events,
    })
}

/// Element-wise maximum of two aligned feature sequences.
pub fn fuse_max(a: &FeatureSequence, b: &FeatureSequence) -> Result<FeatureSequence> {
    if a.frames != b.frames || a.dim != b.dim {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", a.frames, a.dim),
            found: format!("{}x{}", b.frames, b.dim),
        });
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x.max(y))
        .collect();
    FeatureSequence::new(a.frames, a.dim, data)
}

/// Merges per-clip score rows into one `total_frames`-long sequence by
/// averaging all clips covering each frame, accumulated in ascending clip
/// order. Clip starts must be sorted ascending, every clip must lie inside
/// the sequence, and every frame must be covered by at least one clip.
pub fn aggregate_clips(
    clips: &[(usize, ScoreSequence)],
    total_frames: usize,
) -> Result<ScoreSequence> {
    let first = match clips.first() {
        Some((_, seq)) => seq,
        None => {
            return Err(Error::InvalidParam {
                name: "clips",
                msg: "no clips supplied".into(),
            })
        }
    };
    let classes = first.classes;
    let width = classes + 1;
    for (i, (start, seq)) in clips.iter().enumerate() {
        if i > 0 && clips[i - 1].0 > *start {
            return Err(Error::UnsortedClips(i));
        }
        if seq.classes != classes {
            return Err(Error::ShapeMismatch {
                expected: format!("{classes} classes"),
                found: format!("{} classes in clip {i}", seq.classes),
            });
        }
        if start + seq.frames > total_frames {
            return Err(Error::InvalidParam {
                name: "clips",
                msg: format!(
                    "clip {i} spans [{start}, {}) beyond sequence length {total_frames}",
                    start + seq.frames
                ),
            });
        }
    }

    let mut acc = vec![0.0f64; total_frames * width];
    let mut cover = vec![0u32; total_frames];
    for (start, seq) in clips {
        for local in 0..seq.frames {
            let t = start + local;
            cover[t] += 1;
            let row = seq.row(local);
            for (a, &v) in acc[t * width..(t + 1) * width].iter_mut().zip(row) {
                *a += v as f64;
            }
        }
    }
    if let Some(t) = cover.iter().position(|&c| c == 0) {
        return Err(Error::UncoveredFrame { frame: t });
    }
    let data: Vec<f32> = acc
        .iter()
        .enumerate()
        .map(|(i, &v)| (v / cover[i / width] as f64) as f32)
        .collect();
    ScoreSequence::new(total_frames, classes, data)
}

/// Row-wise softmax for turning `classes + 1` logits into probabilities.
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = logits.iter().map(|&v| ((v as f64) - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| (e / sum) as f32).collect()
}

/// Softmax over each row of a logit sequence, producing class probabilities.
pub fn softmax_scores(logits: &FeatureSequence) -> Result<ScoreSequence> {
    if logits.dim < 2 {
        return Err(Error::InvalidParam {
            name: "logits",
            msg: "need background plus at least one class column".into(),
        });
    }
    let mut data = Vec::with_capacity(logits.frames * logits.dim);
    for t in 0..logits.frames {
        data.extend(softmax(logits.row(t)));
    }
    ScoreSequence::new(logits.frames, logits.dim - 1, data)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Foreground class weight in the cross-entropy; background stays at 1.
    pub foreground_weight: f64,
    pub lambda_f: f64,
    pub lambda_l: f64,
    pub lambda_h: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            foreground_weight: 5.0,
            lambda_f: 1.0 / 3.0,
            lambda_l: 1.0 / 3.0,
            lambda_h: 1.0 / 3.0,
        }
    }
}

/// Per-frame weighted cross-entropy, averaged over frames: foreground
/// frames (label ≥ 1) weigh `foreground_weight`, background weighs 1.
/// Probabilities pass through `max(p, LN_FLOOR)` before the log.
pub fn weighted_cross_entropy(
    probs: &ScoreSequence,
    labels: &[usize],
    foreground_weight: f64,
) -> Result<f64> {
    if labels.len() != probs.frames {
        return Err(Error::ShapeMismatch {
            expected: format!("{} labels", probs.frames),
            found: format!("{}", labels.len()),
        });
    }
    if !(foreground_weight >= 0.0) || !foreground_weight.is_finite() {
        return Err(Error::InvalidParam {
            name: "foreground_weight",
            msg: format!("{foreground_weight} must be finite and >= 0"),
        });
    }
    let mut sum = 0.0f64;
    for (t, &label) in labels.iter().enumerate() {
        if label > probs.classes {
            return Err(Error::LabelOutOfRange {
                frame: t,
                label,
                classes: probs.classes,
            });
        }
        let p = (probs.at(t, label) as f64).max(LN_FLOOR);
        let w = if label >= 1 { foreground_weight } else { 1.0 };
        sum += -w * p.ln();
    }
    Ok(sum / probs.frames as f64)
}

/// Weighted sum of the three branch losses.
pub fn combined_loss(
    loss_f: f64,
    loss_l: f64,
    loss_h: f64,
    cfg: &LossConfig,
) -> Result<f64> {
    for (name, v) in [
        ("lambda_f", cfg.lambda_f),
        ("lambda_l", cfg.lambda_l),
        ("lambda_h", cfg.lambda_h),
    ] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidParam {
                name,
                msg: format!("{v} must be finite and >= 0"),
            });
        }
    }
    Ok(cfg.lambda_f * loss_f + cfg.lambda_l * loss_l + cfg.lambda_h * loss_h)
}
