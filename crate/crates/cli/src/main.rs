//! `spotkit` — batch front end for the saliency → RoI → spotting pipeline.
//!
//! Exit codes: 0 success, 2 malformed containers or usage, 3 validation
//! failures, 4 I/O errors, 5 detection/ground-truth video mismatches.
//! Every command is deterministic for fixed inputs and flags; `--threads`
//! only changes scheduling, never numbers.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use spotkit::asv1::{self, Tensor};
use spotkit::error::{Category, Error, Result};
use spotkit::eval::{self, ApReport, EvalConfig, ToleranceUnit};
use spotkit::events::{self, ClassVocab, EventSet};
use spotkit::geom::{self, FrameGeometry};
use spotkit::roi::{self, RoiConfig};
use spotkit::saliency::{self, SaliencyConfig};
use spotkit::spotting::{self, NmsConfig, NmsMode};
use spotkit::synth::{self, SynthConfig, Trajectory};
use spotkit::tensor::{FeatureVolume, SaliencyVolume, Stage};

#[derive(Parser)]
#[command(name = "spotkit", version, about = "Adaptive-RoI precise event spotting toolkit")]
struct Cli {
    /// Worker threads (0 picks one per core). Changes scheduling only —
    /// outputs are bit-identical for any value.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a probability saliency volume from per-clip features.
    Saliency(SaliencyArgs),
    /// Select one region of interest per frame from a saliency volume.
    SelectRoi(SelectRoiArgs),
    /// Crop and resize a feature volume along a region track.
    Crop(CropArgs),
    /// Reduce per-frame class scores to discrete detections.
    Softnms(SoftnmsArgs),
    /// Score detections against ground truth (mAP at each tolerance).
    Eval(EvalArgs),
    /// Generate a synthetic scene with known ground truth.
    Synth(SynthArgs),
    /// Relative compute cost of a set of input resolutions.
    Cost(CostArgs),
    /// Chain saliency → RoI selection → crop, and optionally NMS → eval.
    Pipeline(PipelineArgs),
}

/// Optional config file mirroring the component configs; flags win over
/// file values, file values win over defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    saliency: SaliencyConfig,
    roi: RoiConfig,
    nms: NmsConfig,
    eval: EvalConfig,
    /// High-resolution frame size RoIs are mapped into.
    frame: Option<(usize, usize)>,
}

/// Stamps the file path onto bare I/O errors so multi-file commands point
/// at the offending argument.
fn with_path<T>(r: Result<T>, path: &Path) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    })
}

fn load_config(path: Option<&PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let f = with_path(File::open(p).map_err(Error::Io), p)?;
            serde_json::from_reader(f).map_err(|e| Error::InvalidParam {
                name: "config",
                msg: e.to_string(),
            })
        }
    }
}

fn parse_wh(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w = w.parse().map_err(|e| format!("width {w:?}: {e}"))?;
    let h = h.parse().map_err(|e| format!("height {h:?}: {e}"))?;
    Ok((w, h))
}

fn parse_mode(s: &str) -> std::result::Result<NmsMode, String> {
    match s {
        "soft" => Ok(NmsMode::Soft),
        "hard" => Ok(NmsMode::Hard),
        other => Err(format!("expected soft or hard, got {other:?}")),
    }
}

fn parse_unit(s: &str) -> std::result::Result<ToleranceUnit, String> {
    match s {
        "frames" => Ok(ToleranceUnit::Frames),
        "seconds" => Ok(ToleranceUnit::Seconds),
        other => Err(format!("expected frames or seconds, got {other:?}")),
    }
}

fn parse_trajectory(s: &str) -> std::result::Result<Trajectory, String> {
    match s {
        "static" => Ok(Trajectory::Static),
        "linear" => Ok(Trajectory::Linear),
        "bounce" => Ok(Trajectory::Bounce),
        other => Err(format!("expected static, linear or bounce, got {other:?}")),
    }
}

fn expect_feature_volume(t: Tensor) -> Result<FeatureVolume> {
    match t {
        Tensor::Volume(v) => Ok(v),
        other => Err(Error::ShapeMismatch {
            expected: "rank-4 feature volume".into(),
            found: tensor_shape(&other),
        }),
    }
}

/// Loads a rank-3 volume and re-validates it as a probability stage.
fn read_probability(path: &Path) -> Result<SaliencyVolume> {
    match with_path(asv1::read_typed(path), path)? {
        Tensor::Saliency(sv) => {
            let (l, h, w) = (sv.frames, sv.height, sv.width);
            SaliencyVolume::new(l, h, w, sv.into_data(), Stage::Probability)
        }
        other => Err(Error::ShapeMismatch {
            expected: "rank-3 saliency volume".into(),
            found: tensor_shape(&other),
        }),
    }
}

fn tensor_shape(t: &Tensor) -> String {
    match t {
        Tensor::Vector(v) => format!("rank-1 [{}]", v.len()),
        Tensor::Matrix { rows, cols, .. } => format!("rank-2 [{rows}, {cols}]"),
        Tensor::Saliency(s) => format!("rank-3 [{}, {}, {}]", s.frames, s.height, s.width),
        Tensor::Volume(f) => format!(
            "rank-4 [{}, {}, {}, {}]",
            f.frames, f.channels, f.height, f.width
        ),
    }
}

// ---------------------------------------------------------------------------
// saliency

#[derive(Args)]
struct SaliencyArgs {
    /// Feature volume, ASV1 rank 4 ([frames, channels, height, width]).
    #[arg(long)]
    input: PathBuf,
    /// Output probability saliency volume, ASV1 rank 3.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Spatial upsampling factor.
    #[arg(long)]
    k: Option<usize>,
    /// Spatial Gaussian sigma, upsampled cells.
    #[arg(long)]
    sigma_s: Option<f64>,
    /// Temporal Gaussian sigma, frames; 0 disables the temporal pass.
    #[arg(long)]
    sigma_t: Option<f64>,
    /// Emit a machine-readable summary instead of prose.
    #[arg(long)]
    json: bool,
}

fn saliency_config(file: &FileConfig, args: &SaliencyArgs) -> SaliencyConfig {
    let mut cfg = file.saliency.clone();
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(s) = args.sigma_s {
        cfg.sigma_s = s;
    }
    if let Some(t) = args.sigma_t {
        cfg.sigma_t = t;
    }
    cfg
}

fn cmd_saliency(args: SaliencyArgs) -> Result<()> {
    let file = load_config(args.config.as_ref())?;
    let cfg = saliency_config(&file, &args);
    let fv = expect_feature_volume(with_path(asv1::read_typed(&args.input), &args.input)?)?;
    let sv = saliency::build_saliency(&fv, &cfg)?;
    asv1::write_saliency(&args.output, &sv)?;
    if args.json {
        println!(
            "{}",
            json!({
                "output": args.output,
                "frames": sv.frames,
                "height": sv.height,
                "width": sv.width,
                "stage": "probability",
            })
        );
    } else {
        println!(
            "wrote {}x{}x{} probability saliency to {}",
            sv.frames,
            sv.height,
            sv.width,
            args.output.display()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// select-roi

#[derive(Args)]
struct SelectRoiArgs {
    /// Probability saliency volume, ASV1 rank 3.
    #[arg(long)]
    input: PathBuf,
    /// Output region track, JSON Lines.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// High-resolution frame size the regions are mapped into, WxH.
    #[arg(long, value_parser = parse_wh)]
    frame: Option<(usize, usize)>,
    /// Cumulative-mass threshold in [0, 1].
    #[arg(long)]
    tau: Option<f64>,
    /// Minimum region size in frame pixels, WxH.
    #[arg(long, value_parser = parse_wh)]
    min_roi: Option<(usize, usize)>,
    /// Width-growth step of the size search, grid cells.
    #[arg(long)]
    scale_step: Option<usize>,
    #[arg(long)]
    json: bool,
}

fn roi_config(file: &FileConfig, tau: Option<f64>, min_roi: Option<(usize, usize)>, scale_step: Option<usize>) -> RoiConfig {
    let mut cfg = file.roi.clone();
    if let Some(t) = tau {
        cfg.tau = t;
    }
    if let Some((w, h)) = min_roi {
        cfg.min_w = w;
        cfg.min_h = h;
    }
    if let Some(s) = scale_step {
        cfg.scale_step = s;
    }
    cfg
}

fn frame_size(file: &FileConfig, flag: Option<(usize, usize)>) -> Result<(usize, usize)> {
    flag.or(file.frame).ok_or(Error::InvalidParam {
        name: "frame",
        msg: "pass --frame WxH or set \"frame\" in the config".into(),
    })
}

fn cmd_select_roi(args: SelectRoiArgs) -> Result<()> {
    let file = load_config(args.config.as_ref())?;
    let cfg = roi_config(&file, args.tau, args.min_roi, args.scale_step);
    let (frame_w, frame_h) = frame_size(&file, args.frame)?;
    let sv = read_probability(&args.input)?;
    let geometry = FrameGeometry::new(sv.width, sv.height, frame_w, frame_h)?;
    let track = roi::select_rois(&sv, &cfg, &geometry)?;
    geom::write_track(&args.output, &track.rois)?;
    if args.json {
        println!(
            "{}",
            json!({
                "output": args.output,
                "frames": track.rois.len(),
                "grid": [geometry.grid_w, geometry.grid_h],
                "frame": [geometry.frame_w, geometry.frame_h],
            })
        );
    } else {
        println!(
            "wrote {} regions ({}x{} grid -> {}x{} frame) to {}",
            track.rois.len(),
            geometry.grid_w,
            geometry.grid_h,
            geometry.frame_w,
            geometry.frame_h,
            args.output.display()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// crop

#[derive(Args)]
struct CropArgs {
    /// Feature volume to crop, ASV1 rank 4.
    #[arg(long)]
    input: PathBuf,
    /// Region track, JSON Lines (one region per frame).
    #[arg(long)]
    track: PathBuf,
    /// Output cropped volume, ASV1 rank 4.
    #[arg(long)]
    output: PathBuf,
    /// Output size per region, WxH.
    #[arg(long, value_parser = parse_wh, default_value = "112x112")]
    size: (usize, usize),
    #[arg(long)]
    json: bool,
}

fn cmd_crop(args: CropArgs) -> Result<()> {
    let fv = expect_feature_volume(with_path(asv1::read_typed(&args.input), &args.input)?)?;
    let track = with_path(geom::read_track(&args.track), &args.track)?;
    let (w, h) = args.size;
    let out = roi::crop_resize_clip(&fv, &track, w, h)?;
    asv1::write_volume(&args.output, &out)?;
    if args.json {
        println!(
            "{}",
            json!({
                "output": args.output,
                "frames": out.frames,
                "channels": out.channels,
                "height": out.height,
                "width": out.width,
            })
        );
    } else {
        println!(
            "wrote {}x{}x{}x{} cropped volume to {}",
            out.frames,
            out.channels,
            out.height,
            out.width,
            args.output.display()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// softnms

#[derive(Args)]
struct SoftnmsArgs {
    /// Per-frame class scores, ASV1 rank 2 ([frames, classes + 1],
    /// column 0 background).
    #[arg(long)]
    input: PathBuf,
    /// Class vocabulary JSON (array of foreground names).
    #[arg(long)]
    classes: PathBuf,
    /// Output detections, JSON Lines.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Suppression radius ω in frames.
    #[arg(long)]
    window: Option<usize>,
    /// soft decays neighbors, hard drops them.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<NmsMode>,
    /// Video id to stamp on the detections.
    #[arg(long, default_value = "video")]
    video: String,
    #[arg(long)]
    json: bool,
}

fn nms_config(file: &FileConfig, window: Option<usize>, mode: Option<NmsMode>) -> NmsConfig {
    let mut cfg = file.nms.clone();
    if let Some(w) = window {
        cfg.window = w;
    }
    if let Some(m) = mode {
        cfg.mode = m;
    }
    cfg
}

fn read_scores(path: &Path) -> Result<spotkit::tensor::ScoreSequence> {
    match asv1::read_typed(path)? {
        Tensor::Matrix { rows, cols, data } => {
            if cols < 2 {
                return Err(Error::ShapeMismatch {
                    expected: "at least 2 columns (background + classes)".into(),
                    found: format!("rank-2 [{rows}, {cols}]"),
                });
            }
            spotkit::tensor::ScoreSequence::new(rows, cols - 1, data)
        }
        other => Err(Error::ShapeMismatch {
            expected: "rank-2 score matrix".into(),
            found: tensor_shape(&other),
        }),
    }
}

fn cmd_softnms(args: SoftnmsArgs) -> Result<()> {
    let file = load_config(args.config.as_ref())?;
    let cfg = nms_config(&file, args.window, args.mode);
    let vocab = with_path(ClassVocab::read(&args.classes), &args.classes)?;
    let scores = with_path(read_scores(&args.input), &args.input)?;
    if scores.classes != vocab.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} score classes to match the vocabulary", vocab.len()),
            found: format!("{}", scores.classes),
        });
    }
    let set = spotting::extract_detections(&scores, &cfg, &args.video)?;
    events::write_events(&args.output, std::slice::from_ref(&set), &vocab)?;
    if args.json {
        println!(
            "{}",
            json!({
                "output": args.output,
                "video": set.video,
                "detections": set.events.len(),
            })
        );
    } else {
        println!(
            "wrote {} detections for {} to {}",
            set.events.len(),
            set.video,
            args.output.display()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

#[derive(Args)]
struct EvalArgs {
    /// Detections, JSON Lines with scores.
    #[arg(long)]
    detections: PathBuf,
    /// Ground-truth events, JSON Lines.
    #[arg(long)]
    ground_truth: PathBuf,
    /// Class vocabulary JSON.
    #[arg(long)]
    classes: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Matching tolerance; repeat for several.
    #[arg(long = "delta")]
    deltas: Vec<f64>,
    /// frames or seconds.
    #[arg(long, value_parser = parse_unit)]
    unit: Option<ToleranceUnit>,
    /// Frame rate; required for second tolerances.
    #[arg(long)]
    fps: Option<f64>,
    /// Also write the JSON report here.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write a per-class CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Print the JSON report instead of the table.
    #[arg(long)]
    json: bool,
}

fn eval_config(
    file: &FileConfig,
    deltas: &[f64],
    unit: Option<ToleranceUnit>,
    fps: Option<f64>,
) -> EvalConfig {
    let mut cfg = file.eval.clone();
    if !deltas.is_empty() {
        cfg.tolerances = deltas.to_vec();
    }
    if let Some(u) = unit {
        cfg.unit = u;
    }
    if fps.is_some() {
        cfg.fps = fps;
    }
    cfg
}

fn class_name(vocab: &ClassVocab, label: usize) -> String {
    vocab
        .name(label)
        .map(str::to_owned)
        .unwrap_or_else(|| format!("class-{label}"))
}

fn report_json(reports: &[ApReport], vocab: &ClassVocab) -> serde_json::Value {
    let items: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| {
            let per_class: serde_json::Map<String, serde_json::Value> = r
                .per_class
                .iter()
                .map(|(&label, c)| {
                    (
                        class_name(vocab, label),
                        json!({ "ap": c.ap, "tp": c.tp, "fp": c.fp, "gt": c.gt }),
                    )
                })
                .collect();
            json!({
                "delta": r.delta,
                "delta_frames": r.delta_frames,
                "per_class": per_class,
                "mAP": r.map,
            })
        })
        .collect();
    serde_json::Value::Array(items)
}

fn print_report_table(reports: &[ApReport], vocab: &ClassVocab, unit: ToleranceUnit) {
    for r in reports {
        let delta = match unit {
            ToleranceUnit::Frames => format!("{} frames", r.delta_frames),
            ToleranceUnit::Seconds => format!("{}s ({} frames)", r.delta, r.delta_frames),
        };
        println!("delta {delta}: mAP {:.4}", r.map);
        for (&label, c) in &r.per_class {
            println!(
                "  {}: ap {:.4} tp {} fp {} gt {}",
                class_name(vocab, label),
                c.ap,
                c.tp,
                c.fp,
                c.gt
            );
        }
    }
}

fn write_report_csv(path: &Path, reports: &[ApReport], vocab: &ClassVocab) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "delta,delta_frames,class,ap,tp,fp,gt")?;
    for r in reports {
        for (&label, c) in &r.per_class {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.delta,
                r.delta_frames,
                class_name(vocab, label),
                c.ap,
                c.tp,
                c.fp,
                c.gt
            )?;
        }
        writeln!(w, "{},{},mAP,{},,,", r.delta, r.delta_frames, r.map)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let file = load_config(args.config.as_ref())?;
    let cfg = eval_config(&file, &args.deltas, args.unit, args.fps);
    let vocab = with_path(ClassVocab::read(&args.classes), &args.classes)?;
    let dets = with_path(events::read_events(&args.detections, &vocab), &args.detections)?;
    let gt = with_path(events::read_events(&args.ground_truth, &vocab), &args.ground_truth)?;
    let reports = eval::evaluate(&dets, &gt, &cfg)?;
    let report = report_json(&reports, &vocab);
    if let Some(path) = &args.output {
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), &report)
            .map_err(|e| Error::Io(e.into()))?;
    }
    if let Some(path) = &args.csv {
        write_report_csv(path, &reports, &vocab)?;
    }
    if args.json {
        println!("{report}");
    } else {
        print_report_table(&reports, &vocab, cfg.unit);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// synth

#[derive(Args)]
struct SynthArgs {
    /// Directory for the generated files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    frames: usize,
    /// Feature grid size, WxH.
    #[arg(long, value_parser = parse_wh, default_value = "12x12")]
    grid: (usize, usize),
    #[arg(long, default_value_t = 8)]
    channels: usize,
    /// static, linear or bounce.
    #[arg(long, value_parser = parse_trajectory, default_value = "bounce")]
    trajectory: Trajectory,
    /// Cells per frame.
    #[arg(long, default_value_t = 1.0)]
    velocity: f64,
    /// Uniform noise amplitude on inactive channels.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Gaussian blob sigma, grid cells.
    #[arg(long, default_value_t = 1.2)]
    blob_sigma: f64,
    /// Fraction of channels carrying the blob.
    #[arg(long, default_value_t = 0.25)]
    active_fraction: f64,
    /// Also write ideal one-hot scores for the ground-truth events.
    #[arg(long)]
    scores: bool,
    #[arg(long)]
    json: bool,
}

fn write_boxes(path: &Path, gt: &synth::GroundTruth) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, (b, &(cx, cy))) in gt.boxes.iter().zip(&gt.centers).enumerate() {
        let line = json!({
            "frame": i, "cx": cx, "cy": cy,
            "x": b.x, "y": b.y, "w": b.w, "h": b.h,
        });
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// One-hot score rows: background except at ground-truth event frames.
fn ideal_scores(gt: &EventSet, frames: usize) -> (Vec<u64>, Vec<f32>) {
    let cols = gt.classes + 1;
    let mut data = vec![0.0f32; frames * cols];
    for row in 0..frames {
        data[row * cols] = 1.0;
    }
    for ev in &gt.events {
        let row = ev.frame * cols;
        data[row] = 0.0;
        data[row + ev.class] = 1.0;
    }
    (vec![frames as u64, cols as u64], data)
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        seed: args.seed,
        frames: args.frames,
        width: args.grid.0,
        height: args.grid.1,
        channels: args.channels,
        blob_sigma: args.blob_sigma,
        trajectory: args.trajectory,
        velocity: args.velocity,
        noise: args.noise,
        active_fraction: args.active_fraction,
    };
    let (fv, gt) = synth::gen_scene(&cfg)?;
    std::fs::create_dir_all(&args.out)?;
    let vocab = ClassVocab::new(vec!["bounce".into()])?;

    let features = args.out.join("features.asv1");
    asv1::write_volume(&features, &fv)?;
    let classes = args.out.join("classes.json");
    vocab.write(&classes)?;
    let events_path = args.out.join("events.jsonl");
    events::write_events(&events_path, std::slice::from_ref(&gt.events), &vocab)?;
    let boxes = args.out.join("boxes.jsonl");
    write_boxes(&boxes, &gt)?;
    let scores_path = if args.scores {
        let path = args.out.join("scores.asv1");
        let (dims, data) = ideal_scores(&gt.events, cfg.frames);
        asv1::write_file(&path, &dims, &data)?;
        Some(path)
    } else {
        None
    };

    if args.json {
        println!(
            "{}",
            json!({
                "video": gt.events.video,
                "features": features,
                "classes": classes,
                "events": events_path,
                "boxes": boxes,
                "scores": scores_path,
                "ground_truth_events": gt.events.events.len(),
            })
        );
    } else {
        println!(
            "wrote scene {} ({} frames, {} events) to {}",
            gt.events.video,
            cfg.frames,
            gt.events.events.len(),
            args.out.display()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// cost

#[derive(Args)]
struct CostArgs {
    /// Processed resolution, WxH; repeat for several.
    #[arg(long = "res", value_parser = parse_wh, required = true)]
    resolutions: Vec<(usize, usize)>,
    /// Reference resolution, WxH.
    #[arg(long = "ref", value_parser = parse_wh)]
    reference: (usize, usize),
    /// Reference cost in GFLOPs; scales the ratio into an estimate.
    #[arg(long)]
    gflops: Option<f64>,
    #[arg(long)]
    json: bool,
}

fn cmd_cost(args: CostArgs) -> Result<()> {
    let ratio = eval::cost_ratio(&args.resolutions, args.reference)?;
    let estimate = args.gflops.map(|g| g * ratio);
    if args.json {
        println!("{}", json!({ "ratio": ratio, "gflops": estimate }));
    } else {
        println!("ratio {ratio}");
        if let Some(e) = estimate {
            println!("estimate {e:.4} GFLOPs");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// pipeline

#[derive(Args)]
struct PipelineArgs {
    /// Feature volume, ASV1 rank 4.
    #[arg(long)]
    input: PathBuf,
    /// Directory for intermediate and final artifacts.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    sigma_s: Option<f64>,
    #[arg(long)]
    sigma_t: Option<f64>,
    /// High-resolution frame size, WxH.
    #[arg(long, value_parser = parse_wh)]
    frame: Option<(usize, usize)>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_parser = parse_wh)]
    min_roi: Option<(usize, usize)>,
    #[arg(long)]
    scale_step: Option<usize>,
    /// Also crop the input volume along the selected track, WxH.
    #[arg(long, value_parser = parse_wh)]
    crop_size: Option<(usize, usize)>,
    /// Per-frame class scores (ASV1 rank 2) to spot events from.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Class vocabulary JSON; required with --scores.
    #[arg(long)]
    classes: Option<PathBuf>,
    /// Video id for the detections; defaults to the ground truth's single
    /// video, else "video".
    #[arg(long)]
    video: Option<String>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<NmsMode>,
    /// Ground-truth events to score against; requires --scores.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long = "delta")]
    deltas: Vec<f64>,
    #[arg(long, value_parser = parse_unit)]
    unit: Option<ToleranceUnit>,
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long)]
    json: bool,
}

fn cmd_pipeline(args: PipelineArgs) -> Result<()> {
    let file = load_config(args.config.as_ref())?;
    std::fs::create_dir_all(&args.out)?;

    let fv = expect_feature_volume(with_path(asv1::read_typed(&args.input), &args.input)?)?;
    let s_cfg = {
        let mut cfg = file.saliency.clone();
        if let Some(k) = args.k {
            cfg.k = k;
        }
        if let Some(s) = args.sigma_s {
            cfg.sigma_s = s;
        }
        if let Some(t) = args.sigma_t {
            cfg.sigma_t = t;
        }
        cfg
    };
    let sv = saliency::build_saliency(&fv, &s_cfg)?;
    let saliency_path = args.out.join("saliency.asv1");
    asv1::write_saliency(&saliency_path, &sv)?;

    let r_cfg = roi_config(&file, args.tau, args.min_roi, args.scale_step);
    let (frame_w, frame_h) = frame_size(&file, args.frame)?;
    let geometry = FrameGeometry::new(sv.width, sv.height, frame_w, frame_h)?;
    let track = roi::select_rois(&sv, &r_cfg, &geometry)?;
    let rois_path = args.out.join("rois.jsonl");
    geom::write_track(&rois_path, &track.rois)?;

    let crops_path = match args.crop_size {
        Some((w, h)) => {
            let out = roi::crop_resize_clip(&fv, &track.rois, w, h)?;
            let path = args.out.join("crops.asv1");
            asv1::write_volume(&path, &out)?;
            Some(path)
        }
        None => None,
    };

    let mut detections_path = None;
    let mut report = None;
    if let Some(scores_file) = &args.scores {
        let classes_path = args.classes.as_ref().ok_or(Error::InvalidParam {
            name: "classes",
            msg: "--scores requires --classes".into(),
        })?;
        let vocab = with_path(ClassVocab::read(classes_path), classes_path)?;
        let scores = with_path(read_scores(scores_file), scores_file)?;
        if scores.classes != vocab.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} score classes to match the vocabulary", vocab.len()),
                found: format!("{}", scores.classes),
            });
        }
        let gt = match &args.ground_truth {
            Some(path) => Some(with_path(events::read_events(path, &vocab), path)?),
            None => None,
        };
        let video = match (&args.video, &gt) {
            (Some(v), _) => v.clone(),
            (None, Some(sets)) if sets.len() == 1 => sets[0].video.clone(),
            _ => "video".to_string(),
        };
        let n_cfg = nms_config(&file, args.window, args.mode);
        let set = spotting::extract_detections(&scores, &n_cfg, &video)?;
        let path = args.out.join("detections.jsonl");
        events::write_events(&path, std::slice::from_ref(&set), &vocab)?;
        detections_path = Some(path);

        if let Some(gt_sets) = gt {
            let e_cfg = eval_config(&file, &args.deltas, args.unit, args.fps);
            let reports = eval::evaluate(std::slice::from_ref(&set), &gt_sets, &e_cfg)?;
            if !args.json {
                print_report_table(&reports, &vocab, e_cfg.unit);
            }
            report = Some(report_json(&reports, &vocab));
        }
    } else if args.ground_truth.is_some() {
        return Err(Error::InvalidParam {
            name: "ground_truth",
            msg: "--ground-truth requires --scores".into(),
        });
    }

    if args.json {
        println!(
            "{}",
            json!({
                "saliency": saliency_path,
                "rois": rois_path,
                "crops": crops_path,
                "detections": detections_path,
                "report": report,
            })
        );
    } else {
        println!("pipeline artifacts in {}", args.out.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------

fn run(command: Command) -> Result<()> {
    match command {
        Command::Saliency(a) => cmd_saliency(a),
        Command::SelectRoi(a) => cmd_select_roi(a),
        Command::Crop(a) => cmd_crop(a),
        Command::Softnms(a) => cmd_softnms(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Cost(a) => cmd_cost(a),
        Command::Pipeline(a) => cmd_pipeline(a),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        Category::Format => 2,
        Category::Validation => 3,
        Category::Io => 4,
        Category::VideoMismatch => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        eprintln!("error: {e}");
        return ExitCode::from(3);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
