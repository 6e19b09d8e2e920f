//! Randomized invariant checks across the pipeline.
//!
//! Each block states a mathematical property that holds for every valid
//! input and the bug class it would expose. Deterministic hand cases live
//! in the per-module unit tests; these complement them with shrinkable
//! random coverage.

use proptest::prelude::*;

use spotkit::geom::{FrameGeometry, GridRect};
use spotkit::tensor::{FeatureVolume, SaliencyVolume, ScoreSequence, Stage};
use spotkit::{asv1, eval, roi, saliency, spotting, synth};

/// A volume shape and matching unit-interval payload.
fn unit_volume(
    max_frames: usize,
    max_side: usize,
) -> impl Strategy<Value = (usize, usize, usize, Vec<f32>)> {
    (1..=max_frames, 2..=max_side, 2..=max_side).prop_flat_map(|(l, h, w)| {
        proptest::collection::vec(0.0f32..=1.0, l * h * w)
            .prop_map(move |data| (l, h, w, data))
    })
}

proptest! {
    /// Serialization is bit-exact: every finite f32, -0.0 and subnormals
    /// included, survives a write/read cycle with its exact bit pattern.
    /// If fails: lossy conversion or wrong byte order in the container.
    #[test]
    fn asv1_round_trip_preserves_bits(
        dims in proptest::collection::vec(1u64..=4, 1..=4),
        seed in any::<u64>(),
    ) {
        let count: u64 = dims.iter().product();
        let mut rng = synth::SplitMix64::new(seed);
        let data: Vec<f32> = std::iter::repeat_with(|| {
            loop {
                let v = f32::from_bits(rng.next_u64() as u32);
                if v.is_finite() {
                    return v;
                }
            }
        })
        .take(count as usize)
        .collect();
        let mut buf = Vec::new();
        asv1::write_raw(&mut buf, &dims, &data).unwrap();
        let (rd, rv) = asv1::read_raw(&buf[..]).unwrap();
        prop_assert_eq!(rd, dims);
        prop_assert_eq!(rv.len(), data.len());
        for (a, b) in rv.iter().zip(&data) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    /// Channel averaging is invariant under channel permutation. Values are
    /// sixteenths so every f64 partial sum is exact and the comparison can
    /// be bit-level. If fails: accumulation order leaks into the output.
    #[test]
    fn channel_average_ignores_channel_order(
        (l, h, w) in (1usize..=3, 1usize..=5, 1usize..=5),
        c in 2usize..=4,
        seed in any::<u64>(),
        rot in 1usize..=3,
    ) {
        let mut rng = synth::SplitMix64::new(seed);
        let data: Vec<f32> = std::iter::repeat_with(|| (rng.next_u64() % 17) as f32 / 16.0)
            .take(l * c * h * w)
            .collect();
        let fv = FeatureVolume::new(l, c, h, w, data.clone()).unwrap();
        // Rotate the channel axis by `rot`.
        let plane = h * w;
        let mut rotated = vec![0.0f32; data.len()];
        for frame in 0..l {
            for ch in 0..c {
                let src = (frame * c + ch) * plane;
                let dst = (frame * c + (ch + rot) % c) * plane;
                rotated[dst..dst + plane].copy_from_slice(&data[src..src + plane]);
            }
        }
        let fv_rot = FeatureVolume::new(l, c, h, w, rotated).unwrap();
        let a = saliency::channel_average(&fv).unwrap();
        let b = saliency::channel_average(&fv_rot).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    /// Min-max normalization lands in [0, 1] with the extremes hit exactly
    /// on every frame with spread, and collapses flat frames to zero.
    /// If fails: global instead of per-frame statistics, or bad guard.
    #[test]
    fn minmax_normalize_spans_unit_interval((l, h, w, data) in unit_volume(3, 6)) {
        let sv = SaliencyVolume::new(l, h, w, data, Stage::Raw).unwrap();
        let out = saliency::minmax_normalize(&sv, 1e-9).unwrap();
        for frame in 0..l {
            let raw = sv.frame(frame);
            let lo = raw.iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = raw.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let vals = out.frame(frame);
            if (hi - lo) as f64 >= 1e-9 {
                prop_assert!(vals.iter().all(|&v| (0.0..=1.0).contains(&v)));
                prop_assert!(vals.contains(&0.0) && vals.contains(&1.0));
            } else {
                prop_assert!(vals.iter().all(|&v| v == 0.0));
            }
        }
    }

    /// Bilinear upsampling is a convex combination: outputs stay inside the
    /// source frame's [min, max]. If fails: out-of-range taps or wrong
    /// weights (e.g. unclamped source coordinates).
    #[test]
    fn upsample_stays_in_source_hull(
        (l, h, w, data) in unit_volume(2, 5),
        k in 1usize..=4,
    ) {
        let sv = SaliencyVolume::new(l, h, w, data, Stage::Normalized).unwrap();
        let up = saliency::upsample_bilinear(&sv, k).unwrap();
        prop_assert_eq!((up.height, up.width), (h * k, w * k));
        for frame in 0..l {
            let src = sv.frame(frame);
            let lo = src.iter().cloned().fold(f32::INFINITY, f32::min) - 1e-6;
            let hi = src.iter().cloned().fold(f32::NEG_INFINITY, f32::max) + 1e-6;
            for &v in up.frame(frame) {
                prop_assert!(v >= lo && v <= hi, "{v} outside [{lo}, {hi}]");
            }
        }
    }

    /// Gaussian kernels have unit mass, symmetry, and radius ceil(3σ).
    /// If fails: normalization or truncation drift that would bias the
    /// smoothed saliency toward frame edges.
    #[test]
    fn gaussian_kernel_mass_and_symmetry(sigma in 0.1f64..5.0) {
        let k = saliency::gaussian_kernel(sigma).unwrap();
        prop_assert_eq!(k.len(), 2 * (3.0 * sigma).ceil() as usize + 1);
        let mass: f64 = k.iter().sum();
        prop_assert!((mass - 1.0).abs() < 1e-12);
        for i in 0..k.len() / 2 {
            prop_assert_eq!(k[i], k[k.len() - 1 - i]);
        }
    }

    /// Probability normalization is idempotent: renormalizing a probability
    /// volume moves nothing beyond f32 rounding. If fails: the per-frame
    /// sums aren't actually reaching one.
    #[test]
    fn probability_normalize_is_idempotent((l, h, w, data) in unit_volume(3, 6)) {
        let sv = SaliencyVolume::new(l, h, w, data, Stage::Raw).unwrap();
        let once = saliency::probability_normalize(&sv).unwrap();
        let twice = saliency::probability_normalize(&once).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }

    /// The threshold selector agrees with exhaustive search everywhere, not
    /// just on hand-picked maps. If fails: the summed-area table or ladder
    /// scan diverges from the selection contract.
    #[test]
    fn rect_selection_matches_exhaustive_search(
        (h, w) in (3usize..=9, 3usize..=9),
        seed in any::<u64>(),
        tau in prop::sample::select(vec![0.0, 0.3, 0.6, 0.9, 1.0]),
    ) {
        let mut rng = synth::SplitMix64::new(seed);
        let mut map: Vec<f32> = std::iter::repeat_with(|| rng.next_f32()).take(h * w).collect();
        let sum: f64 = map.iter().map(|&v| v as f64).sum();
        prop_assume!(sum > 1e-6);
        for v in &mut map {
            *v = (*v as f64 / sum) as f32;
        }
        let fast = roi::min_mass_rect(&map, w, h, tau, 1, 1, 1.0, 1).unwrap();
        let slow = synth::oracle_min_rect(&map, w, h, tau, 1, 1, 1.0, 1);
        prop_assert_eq!(fast, slow);
    }

    /// Raising the mass threshold never shrinks the selected rectangle.
    /// If fails: the size ladder isn't scanned in increasing area.
    #[test]
    fn rect_area_is_monotone_in_tau(
        (h, w) in (3usize..=10, 3usize..=10),
        seed in any::<u64>(),
    ) {
        let mut rng = synth::SplitMix64::new(seed);
        let mut map: Vec<f32> = std::iter::repeat_with(|| rng.next_f32()).take(h * w).collect();
        let sum: f64 = map.iter().map(|&v| v as f64).sum();
        prop_assume!(sum > 1e-6);
        for v in &mut map {
            *v = (*v as f64 / sum) as f32;
        }
        let mut prev = 0usize;
        for tau in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
            let r = roi::min_mass_rect(&map, w, h, tau, 1, 1, 1.0, 1).unwrap();
            let area = r.w * r.h;
            prop_assert!(area >= prev, "area shrank from {prev} to {area} at tau {tau}");
            prev = area;
        }
    }

    /// Grid→frame mapping always yields a rectangle inside the frame with
    /// positive extent. If fails: rounding pushed an edge out of bounds.
    #[test]
    fn grid_to_frame_stays_in_bounds(
        (gw, gh) in (1usize..=16, 1usize..=16),
        (mx, my) in (1usize..=8, 1usize..=8),
        seed in any::<u64>(),
    ) {
        let geom = FrameGeometry::new(gw, gh, gw * mx + mx / 2, gh * my + my / 3).unwrap();
        let mut rng = synth::SplitMix64::new(seed);
        let x = (rng.next_u64() as usize) % gw;
        let y = (rng.next_u64() as usize) % gh;
        let rect = GridRect {
            x,
            y,
            w: 1 + (rng.next_u64() as usize) % (gw - x),
            h: 1 + (rng.next_u64() as usize) % (gh - y),
        };
        let r = roi::grid_to_frame(&rect, &geom).unwrap();
        prop_assert!(r.fits(geom.frame_w, geom.frame_h), "{r:?} outside frame");
        prop_assert!(r.w >= 1 && r.h >= 1);
    }

    /// Soft suppression emits each frame at most once, leads with the global
    /// peak, and never raises a score above its input value. If fails: the
    /// decay loop re-emits or inflates.
    #[test]
    fn soft_nms_emits_unique_frames_below_input(
        scores in proptest::collection::vec(0.0f32..=1.0, 1..=40),
        window in 0usize..=4,
    ) {
        let dets = spotting::soft_nms_1d(&scores, window, 1e-4).unwrap();
        let mut seen = std::collections::HashSet::new();
        for d in &dets {
            prop_assert!(seen.insert(d.frame), "frame {} emitted twice", d.frame);
            prop_assert!(d.score <= scores[d.frame] as f64 + 1e-9);
            prop_assert!(d.score >= 1e-4);
        }
        if let Some(first) = dets.first() {
            let best = scores
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                .unwrap();
            prop_assert_eq!(first.frame, best.0);
        }
    }

    /// Hard suppression keeps detections pairwise farther apart than the
    /// window. If fails: the removal span is off by one.
    #[test]
    fn hard_nms_separates_detections(
        scores in proptest::collection::vec(0.0f32..=1.0, 1..=40),
        window in 0usize..=4,
    ) {
        let dets = spotting::hard_nms_1d(&scores, window, 1e-4).unwrap();
        for (i, a) in dets.iter().enumerate() {
            for b in &dets[i + 1..] {
                prop_assert!(a.frame.abs_diff(b.frame) > window);
            }
        }
    }

    /// Cross entropy of a probability row is never negative, whatever the
    /// labels and foreground weight. If fails: a log of a value above one
    /// slipped through, i.e. rows aren't proper distributions.
    #[test]
    fn cross_entropy_is_nonnegative(
        frames in 1usize..=12,
        classes in 1usize..=4,
        weight in 0.5f64..8.0,
        seed in any::<u64>(),
    ) {
        let mut rng = synth::SplitMix64::new(seed);
        let mut data = Vec::with_capacity(frames * (classes + 1));
        for _ in 0..frames {
            let logits: Vec<f32> =
                (0..=classes).map(|_| rng.next_f32() * 8.0 - 4.0).collect();
            data.extend(spotting::softmax(&logits));
        }
        let scores = ScoreSequence::new(frames, classes, data).unwrap();
        let labels: Vec<usize> =
            (0..frames).map(|_| (rng.next_u64() as usize) % (classes + 1)).collect();
        let loss = spotting::weighted_cross_entropy(&scores, &labels, weight).unwrap();
        prop_assert!(loss >= 0.0, "loss {loss}");
    }

    /// Relative compute cost is invariant under uniform rescaling of all
    /// resolutions. If fails: the ratio mixes absolute and relative terms.
    #[test]
    fn cost_ratio_scale_invariance(
        dims in proptest::collection::vec((1usize..=64, 1usize..=64), 1..=5),
        (rw, rh) in (1usize..=64, 1usize..=64),
        s in 2usize..=5,
    ) {
        let base = eval::cost_ratio(&dims, (rw, rh)).unwrap();
        let scaled_dims: Vec<(usize, usize)> =
            dims.iter().map(|&(w, h)| (w * s, h * s)).collect();
        let scaled = eval::cost_ratio(&scaled_dims, (rw * s, rh * s)).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-12 * base.max(1.0));
    }
}
