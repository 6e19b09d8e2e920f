//! End-to-end checks of the command-line surface: exit codes, file
//! round trips, and the documented behavior of each subcommand.

use std::path::Path;
use std::process::{Command, Output};

use spotkit::asv1::{self, Tensor};

fn spotkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spotkit"))
        .args(args)
        .output()
        .unwrap()
}

fn synth_fixture(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out", dir.to_str().unwrap(), "--seed", "3"];
    args.extend_from_slice(extra);
    let out = spotkit(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn saliency_output_is_probability_normalized() {
    let dir = tempfile::tempdir().unwrap();
    synth_fixture(dir.path(), &["--noise", "0.3"]);
    let sal = dir.path().join("saliency.asv1");
    let out = spotkit(&[
        "saliency",
        "--input",
        dir.path().join("features.asv1").to_str().unwrap(),
        "--output",
        sal.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sv = match asv1::read_typed(&sal).unwrap() {
        Tensor::Saliency(sv) => sv,
        other => panic!("expected rank-3 saliency, got {other:?}"),
    };
    assert_eq!((sv.width, sv.height), (96, 96));
    for l in 0..sv.frames {
        let sum: f64 = sv.frame(l).iter().map(|&v| v as f64).sum();
        assert!((sum - 1.0).abs() <= 1e-5, "frame {l} sums to {sum}");
    }
}

#[test]
fn corrupt_magic_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.asv1");
    std::fs::write(&bad, b"NOPE\x00\x04freeform trailing junk").unwrap();
    let out = spotkit(&[
        "saliency",
        "--input",
        bad.to_str().unwrap(),
        "--output",
        dir.path().join("s.asv1").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_input_exits_4_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("does-not-exist.asv1");
    let out = spotkit(&[
        "saliency",
        "--input",
        missing.to_str().unwrap(),
        "--output",
        dir.path().join("s.asv1").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("does-not-exist.asv1"), "stderr: {err}");
}

#[test]
fn invalid_config_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    synth_fixture(dir.path(), &[]);
    let out = spotkit(&[
        "saliency",
        "--input",
        dir.path().join("features.asv1").to_str().unwrap(),
        "--output",
        dir.path().join("s.asv1").to_str().unwrap(),
        "--k",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn degenerate_identity_config_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    synth_fixture(dir.path(), &[]);
    let out = spotkit(&[
        "saliency",
        "--input",
        dir.path().join("features.asv1").to_str().unwrap(),
        "--output",
        dir.path().join("s.asv1").to_str().unwrap(),
        "--k",
        "1",
        "--sigma-t",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn malformed_size_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = spotkit(&[
        "select-roi",
        "--input",
        dir.path().join("s.asv1").to_str().unwrap(),
        "--output",
        dir.path().join("t.jsonl").to_str().unwrap(),
        "--frame",
        "448by448",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn video_mismatch_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let classes = dir.path().join("classes.json");
    std::fs::write(&classes, r#"["hit"]"#).unwrap();
    let gt = dir.path().join("gt.jsonl");
    std::fs::write(&gt, "{\"video\":\"b\",\"frame\":3,\"class\":\"hit\"}\n").unwrap();
    let dets = dir.path().join("dets.jsonl");
    std::fs::write(
        &dets,
        "{\"video\":\"a\",\"frame\":3,\"class\":\"hit\",\"score\":0.9}\n",
    )
    .unwrap();
    let out = spotkit(&[
        "eval",
        "--detections",
        dets.to_str().unwrap(),
        "--ground-truth",
        gt.to_str().unwrap(),
        "--classes",
        classes.to_str().unwrap(),
        "--delta",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn tau_one_selects_the_full_frame() {
    let dir = tempfile::tempdir().unwrap();
    synth_fixture(dir.path(), &["--noise", "0.3"]);
    let sal = dir.path().join("saliency.asv1");
    let out = spotkit(&[
        "saliency",
        "--input",
        dir.path().join("features.asv1").to_str().unwrap(),
        "--output",
        sal.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let track = dir.path().join("track.jsonl");
    let out = spotkit(&[
        "select-roi",
        "--input",
        sal.to_str().unwrap(),
        "--output",
        track.to_str().unwrap(),
        "--frame",
        "96x96",
        "--tau",
        "1.0",
        "--min-roi",
        "16x16",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rois = spotkit::geom::read_track(&track).unwrap();
    assert!(!rois.is_empty());
    for r in rois {
        assert_eq!((r.x, r.y, r.w, r.h), (0, 0, 96, 96));
    }
}

#[test]
fn ideal_scores_spot_the_events_exactly() {
    let dir = tempfile::tempdir().unwrap();
    synth_fixture(dir.path(), &["--scores"]);
    let dets = dir.path().join("dets.jsonl");
    let out = spotkit(&[
        "softnms",
        "--input",
        dir.path().join("scores.asv1").to_str().unwrap(),
        "--classes",
        dir.path().join("classes.json").to_str().unwrap(),
        "--output",
        dets.to_str().unwrap(),
        "--video",
        "synth-3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // With one-hot scores the peaks are unambiguous, so evaluation against
    // the generating events is perfect at zero tolerance.
    let report = dir.path().join("report.json");
    let out = spotkit(&[
        "eval",
        "--detections",
        dets.to_str().unwrap(),
        "--ground-truth",
        dir.path().join("events.jsonl").to_str().unwrap(),
        "--classes",
        dir.path().join("classes.json").to_str().unwrap(),
        "--delta",
        "0",
        "--delta",
        "2",
        "--output",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let reports: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let arr = reports.as_array().unwrap();
    assert_eq!(arr.len(), 2);
    for r in arr {
        assert_eq!(r["mAP"].as_f64().unwrap(), 1.0, "report {r}");
    }
}

#[test]
fn cost_json_reports_ratio_and_estimate() {
    let out = spotkit(&[
        "cost",
        "--res",
        "224x224",
        "--res",
        "112x112",
        "--ref",
        "448x448",
        "--gflops",
        "23.13",
        "--json",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["ratio"].as_f64().unwrap(), 0.3125);
    let est = v["gflops"].as_f64().unwrap();
    assert!((est - 23.13 * 0.3125).abs() < 1e-12);
}

#[test]
fn eval_requires_fps_for_second_tolerances() {
    let dir = tempfile::tempdir().unwrap();
    let classes = dir.path().join("classes.json");
    std::fs::write(&classes, r#"["hit"]"#).unwrap();
    let gt = dir.path().join("gt.jsonl");
    std::fs::write(&gt, "{\"video\":\"v\",\"frame\":3,\"class\":\"hit\"}\n").unwrap();
    let dets = dir.path().join("dets.jsonl");
    std::fs::write(
        &dets,
        "{\"video\":\"v\",\"frame\":3,\"class\":\"hit\",\"score\":0.9}\n",
    )
    .unwrap();
    let out = spotkit(&[
        "eval",
        "--detections",
        dets.to_str().unwrap(),
        "--ground-truth",
        gt.to_str().unwrap(),
        "--classes",
        classes.to_str().unwrap(),
        "--delta",
        "0.5",
        "--unit",
        "seconds",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
