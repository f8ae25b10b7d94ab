//! The run configuration shared by every CLI subcommand.
//!
//! One JSON document with a section per stage. Unknown keys are rejected.
//! Scalar fields can be overridden with dotted `key=value` pairs before the
//! document is deserialized, so overrides go through the same validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::decode::{DEFAULT_MAX_PEAKS, DEFAULT_NMS_IOU, DEFAULT_SCORE_FLOOR, DEFAULT_TOP_K};
use crate::grid::GridSpec;
use crate::io::Dtype;
use crate::metrics::{AP_THRESHOLDS, DEFAULT_MOT_THRESHOLD};
use crate::sim::{ClassPrior, NoiseModel, ObjectSpec, ScenarioConfig};
use crate::targets::DEFAULT_MIN_OVERLAP;
use crate::tracker::{TrackerConfig, DEFAULT_MAX_AGE, PEDESTRIAN_THRESHOLD, VEHICLE_THRESHOLD};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not valid JSON: {0}")]
    Syntax(String),
    #[error("bad override {0:?}: expected key=value")]
    BadOverride(String),
    #[error("override {key}: {reason}")]
    OverridePath { key: String, reason: String },
    #[error("config schema error: {0}")]
    Schema(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub name: String,
    /// Tracker matching distance, meters.
    pub match_threshold: f64,
    /// Mean `(w, l, h)`, meters.
    pub size_mean: [f64; 3],
    /// Log-space size spread.
    #[serde(default)]
    pub size_std: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub scenario: u64,
    pub detections: u64,
    pub points: u64,
    pub scorer: u64,
    pub losses: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            scenario: 0,
            detections: 1,
            points: 2,
            scorer: 3,
            losses: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub num_frames: usize,
    pub objects: Vec<ObjectSpec>,
    pub random_objects: usize,
    pub max_speed: f64,
    pub turn_fraction: f64,
    pub max_turn_rate: f64,
    pub min_separation: f64,
    pub noise: NoiseModel,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let d = ScenarioConfig::default_scenario(0);
        Self {
            num_frames: d.num_frames,
            objects: d.objects,
            random_objects: d.random_objects,
            max_speed: d.max_speed,
            turn_fraction: d.turn_fraction,
            max_turn_rate: d.max_turn_rate,
            min_separation: d.min_separation,
            noise: d.noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetSection {
    pub min_overlap: f64,
    /// Storage precision of encoded target maps.
    pub dtype: Dtype,
}

impl Default for TargetSection {
    fn default() -> Self {
        Self {
            min_overlap: DEFAULT_MIN_OVERLAP,
            dtype: Dtype::F32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeSection {
    pub score_floor: f64,
    pub max_peaks: usize,
    pub nms_iou: f64,
    pub top_k: usize,
}

impl Default for DecodeSection {
    fn default() -> Self {
        Self {
            score_floor: DEFAULT_SCORE_FLOOR,
            max_peaks: DEFAULT_MAX_PEAKS,
            nms_iou: DEFAULT_NMS_IOU,
            top_k: DEFAULT_TOP_K,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    /// Second-stage score from the true IoU with ground truth.
    Oracle,
    /// Fixed random linear layer over the gathered features.
    RandomProjection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineSection {
    pub scorer: ScorerKind,
    pub points_per_object: usize,
    pub clutter_points: usize,
}

impl Default for RefineSection {
    fn default() -> Self {
        Self {
            scorer: ScorerKind::Oracle,
            points_per_object: 200,
            clutter_points: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerSection {
    pub max_age: u32,
}

impl Default for TrackerSection {
    fn default() -> Self {
        Self {
            max_age: DEFAULT_MAX_AGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub ap_thresholds: Vec<f64>,
    pub mot_threshold: f64,
    /// Write one precision-recall CSV per class and threshold.
    pub pr_curves: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            ap_thresholds: AP_THRESHOLDS.to_vec(),
            mot_threshold: DEFAULT_MOT_THRESHOLD,
            pr_curves: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossCheckSection {
    pub trials: usize,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for LossCheckSection {
    fn default() -> Self {
        Self {
            trials: 100,
            step: 1e-5,
            tolerance: 1e-4,
        }
    }
}

/// File locations. Relative names resolve against `dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub dir: PathBuf,
    pub gt: PathBuf,
    pub detections: PathBuf,
    pub targets: PathBuf,
    pub decoded: PathBuf,
    /// Detections consumed by `refine`.
    pub refine_input: PathBuf,
    pub refined: PathBuf,
    /// Detections consumed by `track`.
    pub track_input: PathBuf,
    pub tracks: PathBuf,
    /// Detections scored by `eval`.
    pub eval_detections: PathBuf,
    pub report: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            gt: "gt.jsonl".into(),
            detections: "detections.jsonl".into(),
            targets: "targets.bin".into(),
            decoded: "decoded.jsonl".into(),
            refine_input: "detections.jsonl".into(),
            refined: "refined.jsonl".into(),
            track_input: "detections.jsonl".into(),
            tracks: "tracks.jsonl".into(),
            eval_detections: "detections.jsonl".into(),
            report: "report.json".into(),
        }
    }
}

impl Paths {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub classes: Vec<ClassEntry>,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub targets: TargetSection,
    #[serde(default)]
    pub decode: DecodeSection,
    #[serde(default)]
    pub refine: RefineSection,
    #[serde(default)]
    pub tracker: TrackerSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub losses_check: LossCheckSection,
    #[serde(default)]
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::square(51.2, 0.8).expect("default grid is valid"),
            classes: vec![
                ClassEntry {
                    name: "car".into(),
                    match_threshold: VEHICLE_THRESHOLD,
                    size_mean: [1.9, 4.5, 1.6],
                    size_std: [0.05, 0.08, 0.05],
                },
                ClassEntry {
                    name: "truck".into(),
                    match_threshold: VEHICLE_THRESHOLD,
                    size_mean: [2.5, 8.0, 3.0],
                    size_std: [0.05, 0.1, 0.05],
                },
                ClassEntry {
                    name: "pedestrian".into(),
                    match_threshold: PEDESTRIAN_THRESHOLD,
                    size_mean: [0.7, 0.7, 1.75],
                    size_std: [0.05, 0.05, 0.05],
                },
            ],
            seeds: Seeds::default(),
            scenario: ScenarioSection::default(),
            targets: TargetSection::default(),
            decode: DecodeSection::default(),
            refine: RefineSection::default(),
            tracker: TrackerSection::default(),
            eval: EvalSection::default(),
            losses_check: LossCheckSection::default(),
            paths: Paths::default(),
        }
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

impl RunConfig {
    /// Reads, overrides, deserializes and validates a config file.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text, overrides)
    }

    pub fn from_json_str(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| ConfigError::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.classes.is_empty() {
            return invalid("class table is empty");
        }
        for c in &self.classes {
            if !(c.match_threshold.is_finite() && c.match_threshold > 0.0) {
                return invalid(format!("class {}: match_threshold must be positive", c.name));
            }
        }
        let t = &self.targets;
        if !(t.min_overlap > 0.0 && t.min_overlap < 1.0) {
            return invalid("targets.min_overlap must lie in (0, 1)");
        }
        let d = &self.decode;
        if !(0.0..=1.0).contains(&d.score_floor) {
            return invalid("decode.score_floor must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&d.nms_iou) {
            return invalid("decode.nms_iou must lie in [0, 1]");
        }
        if d.top_k == 0 || d.max_peaks == 0 {
            return invalid("decode.top_k and decode.max_peaks must be at least 1");
        }
        let e = &self.eval;
        if e.ap_thresholds.is_empty() || e.ap_thresholds.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return invalid("eval.ap_thresholds must be a non-empty list of positive distances");
        }
        if !(e.mot_threshold.is_finite() && e.mot_threshold > 0.0) {
            return invalid("eval.mot_threshold must be positive");
        }
        let l = &self.losses_check;
        if l.trials == 0 || !(l.step > 0.0) || !(l.tolerance > 0.0) {
            return invalid("losses_check needs trials >= 1 and positive step/tolerance");
        }
        for o in &self.scenario.objects {
            if o.class_id >= self.classes.len() {
                return invalid(format!(
                    "scenario object has class {} but only {} classes are configured",
                    o.class_id,
                    self.classes.len()
                ));
            }
        }
        self.scenario_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.tracker_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_priors(&self) -> Vec<ClassPrior> {
        self.classes
            .iter()
            .map(|c| ClassPrior {
                name: c.name.clone(),
                size_mean: c.size_mean,
                size_std: c.size_std,
            })
            .collect()
    }

    /// Largest centered square inside the grid range.
    pub fn extent(&self) -> f64 {
        let g = &self.grid;
        [-g.x_min, g.x_max, -g.y_min, g.y_max]
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        let s = &self.scenario;
        ScenarioConfig {
            seed: self.seeds.scenario,
            num_frames: s.num_frames,
            extent: self.extent(),
            classes: self.class_priors(),
            objects: s.objects.clone(),
            random_objects: s.random_objects,
            max_speed: s.max_speed,
            turn_fraction: s.turn_fraction,
            max_turn_rate: s.max_turn_rate,
            min_separation: s.min_separation,
            noise: s.noise.clone(),
        }
    }

    pub fn tracker_config(&self) -> TrackerConfig {
        TrackerConfig {
            class_thresholds: self.classes.iter().map(|c| c.match_threshold).collect(),
            default_threshold: VEHICLE_THRESHOLD,
            max_age: self.tracker.max_age,
        }
    }
}

/// Sets `a.b.c=value` in a JSON document. The value is parsed as JSON when
/// possible and taken as a string otherwise. Intermediate objects are
/// created as needed; array elements are addressed by index.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(assignment.to_string()))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError::BadOverride(assignment.to_string()));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let fail = |reason: String| ConfigError::OverridePath {
        key: key.to_string(),
        reason,
    };
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| fail(format!("{part:?} is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| fail(format!("index {idx} out of range (len {len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(fail(format!("{part:?} is inside a scalar"))),
        };
    }
    unreachable!("loop returns on the last key part")
}
