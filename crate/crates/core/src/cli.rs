//! The `centertrack` command line.
//!
//! Every subcommand takes `--config <path>` plus any number of
//! `--set key=value` overrides and reads/writes the files named in the
//! config's `paths` section. Exit codes: 0 ok, 1 config, 2 I/O, 3 parse,
//! 4 frame sequencing.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig, ScorerKind};
use crate::decode::{decode_detections, select_top, Detection};
use crate::io::{
    check_ascending, pack_target_maps, read_jsonl, read_map_records, target_channel_names, unpack_target_maps,
    write_jsonl, write_map_record, DetectionFrame, FormatError, GtFrame, MapRecord, RefinedFrame, RefinedRecord,
    TrackFrame,
};
use crate::losses::{focal_loss, masked_l1, score_bce, LossValue};
use crate::metrics::{clear_mot, evaluate_detections, MotObject};
use crate::refine::{refine_detections, OracleScorer, RandomProjectionScorer, SecondStageScorer, SURFACE_POINTS};
use crate::sim::{generate_scenario, perturb_detections, sample_points_and_encode, OCCUPANCY_CHANNELS};
use crate::targets::{render_targets, AnnotatedObject};
use crate::tracker::Tracker;

#[derive(Debug, Parser)]
#[command(name = "centertrack", version, about = "Center-based 3D detection and tracking pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config field, e.g. `--set decode.nms_iou=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate ground truth and noisy detections.
    Simulate(Common),
    /// Render ground truth into target maps.
    Encode(Common),
    /// Decode target maps into detections.
    Decode(Common),
    /// Rescore detections with the second stage.
    Refine(Common),
    /// Track detections across frames.
    Track(Common),
    /// Score detections and tracks against ground truth.
    Eval(Common),
    /// Compare analytic loss gradients with finite differences.
    LossesCheck(Common),
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Parse(FormatError),
    #[error("{0}")]
    Sequencing(String),
    #[error("{0}")]
    Stage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Parse(FormatError::Io { .. }) => 2,
            CliError::Parse(_) => 3,
            CliError::Sequencing(_) => 4,
            CliError::Stage(_) => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses `args` and runs the subcommand; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: &Command) -> Result<(), CliError> {
    let common = match cmd {
        Command::Simulate(c)
        | Command::Encode(c)
        | Command::Decode(c)
        | Command::Refine(c)
        | Command::Track(c)
        | Command::Eval(c)
        | Command::LossesCheck(c) => c,
    };
    let cfg = RunConfig::load(&common.config, &common.overrides)?;
    match cmd {
        Command::Simulate(_) => cmd_simulate(&cfg),
        Command::Encode(_) => cmd_encode(&cfg),
        Command::Decode(_) => cmd_decode(&cfg),
        Command::Refine(_) => cmd_refine(&cfg),
        Command::Track(_) => cmd_track(&cfg),
        Command::Eval(_) => cmd_eval(&cfg),
        Command::LossesCheck(_) => cmd_losses_check(&cfg),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn read_frames<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_jsonl(BufReader::new(file), &path.display().to_string()).map_err(CliError::Parse)
}

fn write_frames<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    write_jsonl(create(path)?, items).map_err(io_err(path))
}

fn ensure_ascending(name: &Path, indices: impl IntoIterator<Item = usize>) -> Result<(), CliError> {
    check_ascending(indices).map_err(|(prev, next)| {
        CliError::Sequencing(format!(
            "{}: frame_index {next} follows {prev}; frames must be in ascending order",
            name.display()
        ))
    })
}

fn ensure_aligned(a: &Path, ai: &[usize], b: &Path, bi: &[usize]) -> Result<(), CliError> {
    if ai != bi {
        let first = ai
            .iter()
            .zip(bi)
            .position(|(x, y)| x != y)
            .unwrap_or(ai.len().min(bi.len()));
        return Err(CliError::Sequencing(format!(
            "{} and {} are not frame-aligned (first difference at position {first}; {} vs {} frames)",
            a.display(),
            b.display(),
            ai.len(),
            bi.len()
        )));
    }
    Ok(())
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let scenario = cfg.scenario_config();
    let gt = generate_scenario(&scenario).map_err(|e| CliError::Config(ConfigError::Invalid(e.to_string())))?;
    let dets = perturb_detections(
        &gt,
        &scenario.noise,
        &scenario.classes,
        scenario.extent,
        cfg.seeds.detections,
    )
    .map_err(|e| CliError::Config(ConfigError::Invalid(e.to_string())))?;
    write_frames(&cfg.paths.resolve(&cfg.paths.gt), &gt)?;
    write_frames(&cfg.paths.resolve(&cfg.paths.detections), &dets)?;
    let objects: usize = gt.iter().map(|f| f.objects.len()).sum();
    println!(
        "simulated {} frames, {} objects, seed {}",
        gt.len(),
        objects,
        cfg.seeds.scenario
    );
    Ok(())
}

fn load_gt(cfg: &RunConfig) -> Result<(PathBuf, Vec<GtFrame>), CliError> {
    let path = cfg.paths.resolve(&cfg.paths.gt);
    let gt: Vec<GtFrame> = read_frames(&path)?;
    ensure_ascending(&path, gt.iter().map(|f| f.frame_index))?;
    Ok((path, gt))
}

pub fn cmd_encode(cfg: &RunConfig) -> Result<(), CliError> {
    let (_, gt) = load_gt(cfg)?;
    let out_path = cfg.paths.resolve(&cfg.paths.targets);
    let mut out = create(&out_path)?;
    let names = target_channel_names(cfg.num_classes());
    let (mut objects, mut collisions, mut skipped) = (0, 0, 0);
    for frame in &gt {
        let render = render_targets(&frame.objects, &cfg.grid, cfg.num_classes(), cfg.targets.min_overlap)
            .map_err(|e| CliError::Stage(format!("frame {}: {e}", frame.frame_index)))?;
        objects += frame.objects.len();
        collisions += render.collisions.len();
        skipped += render.skipped_out_of_range;
        let record = MapRecord {
            frame_index: frame.frame_index,
            channel_names: names.clone(),
            map: pack_target_maps(&render.maps),
        };
        write_map_record(&mut out, &record, cfg.targets.dtype).map_err(io_err(&out_path))?;
    }
    out.flush().map_err(io_err(&out_path))?;
    println!(
        "encoded {} frames, {objects} objects, {collisions} center collisions, {skipped} out of range",
        gt.len()
    );
    Ok(())
}

pub fn cmd_decode(cfg: &RunConfig) -> Result<(), CliError> {
    let in_path = cfg.paths.resolve(&cfg.paths.targets);
    let file = File::open(&in_path).map_err(io_err(&in_path))?;
    let records =
        read_map_records(BufReader::new(file), &in_path.display().to_string()).map_err(CliError::Parse)?;
    ensure_ascending(&in_path, records.iter().map(|r| r.frame_index))?;
    let mut frames = Vec::with_capacity(records.len());
    let mut dropped = 0;
    for r in &records {
        let maps = unpack_target_maps(&r.map)
            .map_err(|e| CliError::Stage(format!("frame {}: {e}", r.frame_index)))?;
        if maps.num_classes() != cfg.num_classes() {
            return Err(CliError::Stage(format!(
                "frame {}: map has {} classes, config has {}",
                r.frame_index,
                maps.num_classes(),
                cfg.num_classes()
            )));
        }
        let out = decode_detections(&maps, cfg.decode.max_peaks, cfg.decode.score_floor);
        dropped += out.dropped;
        frames.push(DetectionFrame {
            frame_index: r.frame_index,
            detections: select_top(out.detections, cfg.decode.nms_iou, cfg.decode.top_k),
        });
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} peaks with non-finite regression values");
    }
    write_frames(&cfg.paths.resolve(&cfg.paths.decoded), &frames)?;
    let n: usize = frames.iter().map(|f| f.detections.len()).sum();
    println!("decoded {} frames, {n} detections", frames.len());
    Ok(())
}

pub fn cmd_refine(cfg: &RunConfig) -> Result<(), CliError> {
    let (gt_path, gt) = load_gt(cfg)?;
    let in_path = cfg.paths.resolve(&cfg.paths.refine_input);
    let dets: Vec<DetectionFrame> = read_frames(&in_path)?;
    ensure_ascending(&in_path, dets.iter().map(|f| f.frame_index))?;
    let gi: Vec<usize> = gt.iter().map(|f| f.frame_index).collect();
    let di: Vec<usize> = dets.iter().map(|f| f.frame_index).collect();
    ensure_aligned(&gt_path, &gi, &in_path, &di)?;

    let feature_len = SURFACE_POINTS * OCCUPANCY_CHANNELS;
    let projection = RandomProjectionScorer::new(cfg.seeds.scorer, feature_len);
    let mut frames = Vec::with_capacity(dets.len());
    for (g, d) in gt.iter().zip(&dets) {
        let encoded = sample_points_and_encode(
            &g.objects,
            cfg.refine.points_per_object,
            cfg.refine.clutter_points,
            &cfg.grid,
            cfg.seeds.points.wrapping_add(g.frame_index as u64),
        );
        let oracle;
        let scorer: &dyn SecondStageScorer = match cfg.refine.scorer {
            ScorerKind::Oracle => {
                oracle = OracleScorer::new(g.objects.iter().map(|o| o.bbox).collect());
                &oracle
            }
            ScorerKind::RandomProjection => &projection,
        };
        let refined = refine_detections(&d.detections, &encoded.features, scorer)
            .map_err(|e| CliError::Stage(format!("frame {}: {e}", d.frame_index)))?;
        let records = refined
            .iter()
            .map(RefinedRecord::from_refined)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Stage(format!("frame {}: {e}", d.frame_index)))?;
        frames.push(RefinedFrame {
            frame_index: d.frame_index,
            detections: records,
        });
    }
    write_frames(&cfg.paths.resolve(&cfg.paths.refined), &frames)?;
    let n: usize = frames.iter().map(|f| f.detections.len()).sum();
    println!("refined {} frames, {n} detections", frames.len());
    Ok(())
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank]
}

pub fn cmd_track(cfg: &RunConfig) -> Result<(), CliError> {
    let in_path = cfg.paths.resolve(&cfg.paths.track_input);
    let dets: Vec<DetectionFrame> = read_frames(&in_path)?;
    ensure_ascending(&in_path, dets.iter().map(|f| f.frame_index))?;
    let mut tracker =
        Tracker::new(cfg.tracker_config()).map_err(|e| CliError::Config(ConfigError::Invalid(e.to_string())))?;
    let mut frames = Vec::with_capacity(dets.len());
    let mut latency_ms = Vec::with_capacity(dets.len());
    for d in &dets {
        let start = Instant::now();
        let tracks = tracker.step(&d.detections).to_vec();
        latency_ms.push(start.elapsed().as_secs_f64() * 1e3);
        frames.push(TrackFrame {
            frame_index: d.frame_index,
            tracks,
        });
    }
    write_frames(&cfg.paths.resolve(&cfg.paths.tracks), &frames)?;
    let mean = latency_ms.iter().sum::<f64>() / latency_ms.len().max(1) as f64;
    latency_ms.sort_by(f64::total_cmp);
    let report = json!({
        "frames": frames.len(),
        "latency_ms": {
            "mean": mean,
            "p50": percentile(&latency_ms, 0.5),
            "p99": percentile(&latency_ms, 0.99),
        },
    });
    println!("{report}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct ClassReport {
    class_id: usize,
    name: String,
    /// AP keyed by threshold; null when the class has no ground truth.
    ap: BTreeMap<String, Option<f64>>,
    mota: Option<f64>,
    motp: Option<f64>,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    ids: usize,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    map: Option<f64>,
    per_class: Vec<ClassReport>,
    mota: Option<f64>,
    motp: Option<f64>,
    fp: Option<usize>,
    #[serde(rename = "fn")]
    fn_: Option<usize>,
    ids: Option<usize>,
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<(), CliError> {
    let (gt_path, gt) = load_gt(cfg)?;
    let gi: Vec<usize> = gt.iter().map(|f| f.frame_index).collect();
    let gt_objects: Vec<Vec<AnnotatedObject>> = gt.iter().map(|f| f.objects.clone()).collect();

    let det_path = cfg.paths.resolve(&cfg.paths.eval_detections);
    let dets: Vec<DetectionFrame> = read_frames(&det_path)?;
    ensure_ascending(&det_path, dets.iter().map(|f| f.frame_index))?;
    let di: Vec<usize> = dets.iter().map(|f| f.frame_index).collect();
    ensure_aligned(&gt_path, &gi, &det_path, &di)?;
    let det_lists: Vec<Vec<Detection>> = dets.into_iter().map(|f| f.detections).collect();
    let det_eval = evaluate_detections(&det_lists, &gt_objects, cfg.num_classes(), &cfg.eval.ap_thresholds);

    let track_path = cfg.paths.resolve(&cfg.paths.tracks);
    let mot = if track_path.exists() {
        let tracks: Vec<TrackFrame> = read_frames(&track_path)?;
        ensure_ascending(&track_path, tracks.iter().map(|f| f.frame_index))?;
        let ti: Vec<usize> = tracks.iter().map(|f| f.frame_index).collect();
        ensure_aligned(&gt_path, &gi, &track_path, &ti)?;
        // Coasting tracks are internal to the tracker, not predictions.
        let preds: Vec<Vec<MotObject>> = tracks
            .iter()
            .map(|f| f.tracks.iter().filter(|t| t.is_active()).map(MotObject::from).collect())
            .collect();
        let truth: Vec<Vec<MotObject>> = gt_objects
            .iter()
            .map(|f| f.iter().map(MotObject::from).collect())
            .collect();
        Some(clear_mot(&preds, &truth, cfg.eval.mot_threshold))
    } else {
        log::warn!("{} not found; skipping tracking metrics", track_path.display());
        None
    };

    let per_class = det_eval
        .per_class
        .iter()
        .map(|c| {
            let m = mot
                .as_ref()
                .and_then(|m| m.per_class.iter().find(|r| r.class_id == c.class_id));
            ClassReport {
                class_id: c.class_id,
                name: cfg.classes[c.class_id].name.clone(),
                ap: c.ap.iter().map(|(t, ap)| (format!("{t}"), *ap)).collect(),
                mota: m.and_then(|r| r.mota),
                motp: m.and_then(|r| r.motp),
                fp: m.map_or(0, |r| r.counts.fp),
                fn_: m.map_or(0, |r| r.counts.fn_),
                ids: m.map_or(0, |r| r.counts.ids),
            }
        })
        .collect();
    let report = EvalReport {
        map: det_eval.map,
        per_class,
        mota: mot.as_ref().and_then(|m| m.mota),
        motp: mot.as_ref().and_then(|m| m.motp),
        fp: mot.as_ref().map(|m| m.counts.fp),
        fn_: mot.as_ref().map(|m| m.counts.fn_),
        ids: mot.as_ref().map(|m| m.counts.ids),
    };
    let report_path = cfg.paths.resolve(&cfg.paths.report);
    let mut out = create(&report_path)?;
    serde_json::to_writer_pretty(&mut out, &report)
        .map_err(|e| CliError::Io {
            path: report_path.clone(),
            source: e.into(),
        })?;
    out.write_all(b"\n").and_then(|_| out.flush()).map_err(io_err(&report_path))?;

    if cfg.eval.pr_curves {
        for (class_id, curves) in det_eval.curves.iter().enumerate() {
            for (threshold, curve) in curves {
                let name = format!("pr_{}_{threshold}.csv", cfg.classes[class_id].name);
                let path = cfg.paths.resolve(Path::new(&name));
                let mut w = create(&path)?;
                let mut text = String::from("score,recall,precision\n");
                for p in curve {
                    text.push_str(&format!("{},{},{}\n", p.score, p.recall, p.precision));
                }
                w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(io_err(&path))?;
            }
        }
    }
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct GradientReport {
    pub loss: &'static str,
    pub trials: usize,
    pub max_relative_error: f64,
    pub pass: bool,
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Largest relative error between `value.gradient` and central differences
/// of `f` around `x`.
fn check_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], value: &LossValue, h: f64) -> f64 {
    let mut worst = 0.0f64;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        worst = worst.max(relative_error(value.gradient[i], (up - down) / (2.0 * h)));
    }
    worst
}

/// Runs randomized gradient checks of the three losses.
pub fn gradient_checks(trials: usize, h: f64, tolerance: f64, seed: u64) -> Vec<GradientReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut focal, mut l1, mut bce) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..trials {
        let n = rng.random_range(4..24);
        let pred: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
        let target: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < 0.2 { 1.0 } else { rng.random_range(0.0..0.99) })
            .collect();
        let eval = |p: &[f64]| focal_loss(p, &target, 2.0, 4.0).map(|v| v.value).unwrap_or(f64::NAN);
        let v = focal_loss(&pred, &target, 2.0, 4.0).expect("shapes match");
        focal = focal.max(check_gradient(eval, &pred, &v, h));

        let channels = rng.random_range(1..4);
        let cells = rng.random_range(1..8);
        let pred: Vec<f64> = (0..cells * channels).map(|_| rng.random_range(-3.0..3.0)).collect();
        // keep every residual away from the kink at zero
        let target: Vec<f64> = pred
            .iter()
            .map(|p| p + rng.random_range(0.01..1.0) * if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let mask: Vec<bool> = (0..cells).map(|_| rng.random::<f64>() < 0.6).collect();
        let eval = |p: &[f64]| masked_l1(p, &target, &mask, channels).map(|v| v.value).unwrap_or(f64::NAN);
        let v = masked_l1(&pred, &target, &mask, channels).expect("shapes match");
        l1 = l1.max(check_gradient(eval, &pred, &v, h));

        let p = rng.random_range(0.01..0.99);
        let t: f64 = rng.random();
        let v = score_bce(p, t);
        let eval = |x: &[f64]| score_bce(x[0], t).value;
        bce = bce.max(check_gradient(eval, &[p], &v, h));
    }
    [("focal", focal), ("l1", l1), ("bce", bce)]
        .into_iter()
        .map(|(loss, err)| GradientReport {
            loss,
            trials,
            max_relative_error: err,
            pass: err <= tolerance,
        })
        .collect()
}

pub fn cmd_losses_check(cfg: &RunConfig) -> Result<(), CliError> {
    let l = &cfg.losses_check;
    let reports = gradient_checks(l.trials, l.step, l.tolerance, cfg.seeds.losses);
    println!("{}", serde_json::to_string(&reports).expect("report serializes"));
    if reports.iter().all(|r| r.pass) {
        Ok(())
    } else {
        Err(CliError::Stage("gradient check failed".into()))
    }
}
