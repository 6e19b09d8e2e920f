//! mAP@δ evaluation: greedy temporal matching, all-point average precision,
//! and the pixel-proportional compute-cost model.
//!
//! The matcher is greedy in score order because that is what spotting
//! benchmarks conventionally do; an exhaustive optimal matcher lives in the
//! synth module as an upper-bound oracle, and tests hold the greedy TP count
//! to it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToleranceUnit {
    Frames,
    Seconds,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Matching tolerances, ascending: whole frame counts, or seconds when
    /// `unit` says so.
    pub tolerances: Vec<f64>,
    pub unit: ToleranceUnit,
    /// Required (and > 0) when tolerances are in seconds.
    #[serde(default)]
    pub fps: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tolerances: vec![0.0, 1.0, 2.0],
            unit: ToleranceUnit::Frames,
            fps: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tolerances.is_empty() {
            return Err(Error::InvalidParam {
                name: "tolerances",
                msg: "need at least one δ".into(),
            });
        }
        for pair in self.tolerances.windows(2) {
            if pair[0] > pair[1] {
                return Err(Error::InvalidParam {
                    name: "tolerances",
                    msg: format!("{:?} not sorted ascending", self.tolerances),
                });
            }
        }
        for &d in &self.tolerances {
            if !(d >= 0.0) || !d.is_finite() {
                return Err(Error::InvalidParam {
                    name: "tolerances",
                    msg: format!("{d} must be finite and >= 0"),
                });
            }
            if self.unit == ToleranceUnit::Frames && d.fract() != 0.0 {
                return Err(Error::InvalidParam {
                    name: "tolerances",
                    msg: format!("{d} frames is not a whole number"),
                });
            }
        }
        if self.unit == ToleranceUnit::Seconds {
            match self.fps {
                Some(f) if f > 0.0 && f.is_finite() => {}
                other => {
                    return Err(Error::InvalidParam {
                        name: "fps",
                        msg: format!("{other:?} must be > 0 for second tolerances"),
                    })
                }
            }
        }
        Ok(())
    }

    /// Tolerances in frames, converting seconds as `round(δ · fps)`.
    pub fn tolerance_frames(&self) -> Result<Vec<usize>> {
        self.validate()?;
        Ok(self
            .tolerances
            .iter()
            .map(|&d| match self.unit {
                ToleranceUnit::Frames => d as usize,
                ToleranceUnit::Seconds => (d * self.fps.unwrap()).round() as usize,
            })
            .collect())
    }
}

/// One detection's matching outcome on a single video.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchFlag {
    pub class: usize,
    pub frame: usize,
    pub score: f64,
    pub tp: bool,
}

/// Greedy matching on one video: detections in score-descending order
/// (earlier frame on ties) claim the nearest unmatched ground-truth event
/// of their class within `delta` frames (earlier event on distance ties).
/// Returned flags are in that score order. Every detection needs a score.
pub fn match_detections(
    dets: &EventSet,
    gt: &EventSet,
    delta: usize,
) -> Result<Vec<MatchFlag>> {
    if dets.video != gt.video {
        return Err(Error::VideoIdMismatch(dets.video.clone()));
    }
    let mut order: Vec<usize> = (0..dets.events.len()).collect();
    for (i, ev) in dets.events.iter().enumerate() {
        if ev.score.is_none() {
            return Err(Error::InvalidParam {
                name: "detections",
                msg: format!("event {i} in {:?} has no score", dets.video),
            });
        }
    }
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&dets.events[a], &dets.events[b]);
        eb.score
            .unwrap()
            .partial_cmp(&ea.score.unwrap())
            .unwrap()
            .then(ea.frame.cmp(&eb.frame))
            .then(a.cmp(&b))
    });

    let mut taken = vec![false; gt.events.len()];
    let mut flags = Vec::with_capacity(order.len());
    for &i in &order {
        let det = &dets.events[i];
        let mut best: Option<(usize, usize, usize)> = None; // (dist, gt frame, gt idx)
        for (j, g) in gt.events.iter().enumerate() {
            if taken[j] || g.class != det.class {
                continue;
            }
            let dist = det.frame.abs_diff(g.frame);
            if dist > delta {
                continue;
            }
            let key = (dist, g.frame, j);
            if best.is_none_or(|b| key < b) {
                best = Some(key);
            }
        }
        let tp = match best {
            Some((_, _, j)) => {
                taken[j] = true;
                true
            }
            None => false,
        };
        flags.push(MatchFlag {
            class: det.class,
            frame: det.frame,
            score: det.score.unwrap(),
            tp,
        });
    }
    Ok(flags)
}

/// All-point average precision from score-ordered TP/FP flags.
///
/// Precision after each detection is enveloped by its running maximum from
/// the right; AP sums envelope precision over recall increments. With no
/// ground truth there is no recall axis — callers exclude such classes, and
/// this returns 0 for them.
pub fn average_precision(flags: &[bool], gt_count: usize) -> f64 {
    if gt_count == 0 || flags.is_empty() {
        return 0.0;
    }
    let n = flags.len();
    let mut precision = Vec::with_capacity(n);
    let mut recall = Vec::with_capacity(n);
    let mut tp = 0usize;
    for (i, &f) in flags.iter().enumerate() {
        if f {
            tp += 1;
        }
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / gt_count as f64);
    }
    // Envelope: best precision achievable at this recall or beyond.
    let mut envelope = precision.clone();
    for i in (0..n - 1).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..n {
        ap += (recall[i] - prev_recall) * envelope[i];
        prev_recall = recall[i];
    }
    ap
}

/// Per-class outcome at one tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassAp {
    pub ap: f64,
    pub tp: usize,
    pub fp: usize,
    pub gt: usize,
}

/// Evaluation result at one tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct ApReport {
    /// δ as configured (frames or seconds).
    pub delta: f64,
    /// δ after conversion to frames.
    pub delta_frames: usize,
    /// Per-class results, only classes with at least one GT event.
    pub per_class: BTreeMap<usize, ClassAp>,
    /// Unweighted mean AP over the classes above.
    pub map: f64,
}

/// Scores detections against ground truth at every configured tolerance.
///
/// Matching runs per video, then flags pool per class across videos and are
/// re-sorted by score (stable, earlier frame on ties) for one AP curve per
/// class. Classes without any ground truth are excluded from the mean —
/// detections claiming such classes are simply ignored. Every detection
/// video must exist in the ground truth; ground-truth videos without
/// detections are ordinary misses.
pub fn evaluate(dets: &[EventSet], gt: &[EventSet], cfg: &EvalConfig) -> Result<Vec<ApReport>> {
    let frames = cfg.tolerance_frames()?;
    for (i, set) in gt.iter().enumerate() {
        if gt[..i].iter().any(|s| s.video == set.video) {
            return Err(Error::InvalidParam {
                name: "ground_truth",
                msg: format!("duplicate video {:?}", set.video),
            });
        }
    }
    for (i, set) in dets.iter().enumerate() {
        if dets[..i].iter().any(|s| s.video == set.video) {
            return Err(Error::InvalidParam {
                name: "detections",
                msg: format!("duplicate video {:?}", set.video),
            });
        }
        if !gt.iter().any(|s| s.video == set.video) {
            return Err(Error::VideoIdMismatch(set.video.clone()));
        }
    }
    let classes = gt
        .iter()
        .map(|s| s.classes)
        .chain(dets.iter().map(|s| s.classes))
        .max()
        .unwrap_or(0);

    let mut gt_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for set in gt {
        for ev in &set.events {
            *gt_counts.entry(ev.class).or_default() += 1;
        }
    }

    let mut reports = Vec::with_capacity(frames.len());
    for (ti, &delta_frames) in frames.iter().enumerate() {
        // Pool match flags across videos, class by class.
        let mut pooled: BTreeMap<usize, Vec<MatchFlag>> = BTreeMap::new();
        for set in dets {
            let gt_set = gt.iter().find(|s| s.video == set.video).unwrap();
            for flag in match_detections(set, gt_set, delta_frames)? {
                pooled.entry(flag.class).or_default().push(flag);
            }
        }
        for flags in pooled.values_mut() {
            flags.sort_by(|a, b| {
                b.score
                    .partial_cmp(&a.score)
                    .unwrap()
                    .then(a.frame.cmp(&b.frame))
            });
        }

        let mut per_class = BTreeMap::new();
        let empty: Vec<MatchFlag> = Vec::new();
        for class in 1..=classes {
            let gt_count = gt_counts.get(&class).copied().unwrap_or(0);
            if gt_count == 0 {
                continue; // no recall axis; excluded from the mean
            }
            let flags = pooled.get(&class).unwrap_or(&empty);
            let bits: Vec<bool> = flags.iter().map(|f| f.tp).collect();
            let tp = bits.iter().filter(|&&b| b).count();
            per_class.insert(
                class,
                ClassAp {
                    ap: average_precision(&bits, gt_count),
                    tp,
                    fp: bits.len() - tp,
                    gt: gt_count,
                },
            );
        }
        let map = if per_class.is_empty() {
            0.0
        } else {
            per_class.values().map(|c| c.ap).sum::<f64>() / per_class.len() as f64
        };
        reports.push(ApReport {
            delta: cfg.tolerances[ti],
            delta_frames,
            per_class,
            map,
        });
    }
    Ok(reports)
}

/// Pixel-proportional compute cost of processing `resolutions` per frame,
/// relative to a single pass at `reference` — the scaling model for
/// convolutional extractors, where FLOPs track input area.
pub fn cost_ratio(resolutions: &[(usize, usize)], reference: (usize, usize)) -> Result<f64> {
    if reference.0 == 0 || reference.1 == 0 {
        return Err(Error::InvalidParam {
            name: "reference",
            msg: "dimensions must be positive".into(),
        });
    }
    let mut sum = 0.0f64;
    for &(w, h) in resolutions {
        if w == 0 || h == 0 {
            return Err(Error::InvalidParam {
                name: "resolutions",
                msg: format!("{w}x{h} has a zero dimension"),
            });
        }
        sum += w as f64 * h as f64;
    }
    Ok(sum / (reference.0 as f64 * reference.1 as f64))
}
