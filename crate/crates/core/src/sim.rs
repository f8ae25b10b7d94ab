//! Synthetic scenes: ground-truth trajectories, a noisy detector model and
//! an occupancy encoder that stands in for a learned backbone.
//!
//! All randomness comes from `ChaCha8Rng` (rand_chacha) seeded with
//! `seed_from_u64`, with normals drawn through `rand_distr::StandardNormal`.
//! Every stochastic quantity is drawn in a fixed order regardless of the
//! noise magnitudes, so two runs that differ only in a sigma see the same
//! underlying random numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decode::Detection;
use crate::geometry::{normalize_yaw, Box3D};
use crate::grid::{FeatureMap, GridSpec};
use crate::targets::AnnotatedObject;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, SimError> {
    Err(SimError::Invalid(msg.into()))
}

/// Size prior of one class. `size_std` is in log units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassPrior {
    pub name: String,
    /// Mean `(w, l, h)`, meters.
    pub size_mean: [f64; 3],
    #[serde(default)]
    pub size_std: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MotionModel {
    /// Fixed displacement per frame.
    ConstantVelocity { velocity: [f64; 2] },
    /// Moves `speed` meters per frame along its yaw, which turns by
    /// `turn_rate` radians per frame.
    ConstantTurn { speed: f64, turn_rate: f64 },
}

/// A hand-placed object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub class_id: usize,
    pub start: [f64; 2],
    #[serde(default)]
    pub yaw: f64,
    /// `(w, l, h)`; the class mean when absent.
    #[serde(default)]
    pub size: Option<[f64; 3]>,
    pub motion: MotionModel,
    #[serde(default)]
    pub spawn_frame: usize,
    /// First frame the object is gone.
    #[serde(default)]
    pub despawn_frame: Option<usize>,
}

/// Detector noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub center_sigma: f64,
    pub size_sigma: f64,
    pub yaw_sigma: f64,
    pub velocity_sigma: f64,
    pub miss_probability: f64,
    /// Expected false positives per frame.
    pub false_positive_rate: f64,
    /// True-positive scores are uniform in this range.
    pub tp_score: [f64; 2],
    pub fp_score: [f64; 2],
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            center_sigma: 0.0,
            size_sigma: 0.0,
            yaw_sigma: 0.0,
            velocity_sigma: 0.0,
            miss_probability: 0.0,
            false_positive_rate: 0.0,
            tp_score: [1.0, 1.0],
            fp_score: [0.05, 0.3],
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let sigmas = [
            self.center_sigma,
            self.size_sigma,
            self.yaw_sigma,
            self.velocity_sigma,
            self.false_positive_rate,
        ];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return invalid("noise magnitudes must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.miss_probability) {
            return invalid("miss_probability must lie in [0, 1]");
        }
        for r in [self.tp_score, self.fp_score] {
            if !(0.0 <= r[0] && r[0] <= r[1] && r[1] <= 1.0) {
                return invalid(format!("score range {r:?} must satisfy 0 <= lo <= hi <= 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub num_frames: usize,
    /// Objects are emitted only while `|x| < extent` and `|y| < extent`.
    pub extent: f64,
    pub classes: Vec<ClassPrior>,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    /// Additional objects with random class, size, start and motion.
    #[serde(default)]
    pub random_objects: usize,
    #[serde(default = "default_max_speed")]
    pub max_speed: f64,
    /// Fraction of random objects that turn.
    #[serde(default)]
    pub turn_fraction: f64,
    #[serde(default = "default_max_turn_rate")]
    pub max_turn_rate: f64,
    /// Minimum distance between random start positions.
    #[serde(default = "default_min_separation")]
    pub min_separation: f64,
    #[serde(default)]
    pub noise: NoiseModel,
}

fn default_max_speed() -> f64 {
    1.0
}

fn default_max_turn_rate() -> f64 {
    0.05
}

fn default_min_separation() -> f64 {
    6.0
}

impl ScenarioConfig {
    /// 100 frames, 20 random objects over three classes in a 51.2 m range.
    pub fn default_scenario(seed: u64) -> Self {
        Self {
            seed,
            num_frames: 100,
            extent: 51.2,
            classes: default_classes(),
            objects: Vec::new(),
            random_objects: 20,
            max_speed: 1.0,
            turn_fraction: 0.3,
            max_turn_rate: 0.05,
            min_separation: 6.0,
            noise: NoiseModel::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.extent.is_finite() && self.extent > 0.0) {
            return invalid("extent must be positive");
        }
        if self.classes.is_empty() {
            return invalid("at least one class is required");
        }
        for c in &self.classes {
            if c.size_mean.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return invalid(format!("class {} has a non-positive mean size", c.name));
            }
            if c.size_std.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return invalid(format!("class {} has a negative size std", c.name));
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.class_id >= self.classes.len() {
                return invalid(format!("object {i} has unknown class {}", o.class_id));
            }
            if let Some(s) = o.size {
                if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return invalid(format!("object {i} has a non-positive size"));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.turn_fraction) {
            return invalid("turn_fraction must lie in [0, 1]");
        }
        if !(self.max_speed >= 0.0 && self.max_turn_rate >= 0.0 && self.min_separation >= 0.0) {
            return invalid("max_speed, max_turn_rate and min_separation must be non-negative");
        }
        self.noise.validate()
    }
}

pub fn default_classes() -> Vec<ClassPrior> {
    vec![
        ClassPrior {
            name: "car".into(),
            size_mean: [1.9, 4.5, 1.6],
            size_std: [0.05, 0.08, 0.05],
        },
        ClassPrior {
            name: "truck".into(),
            size_mean: [2.5, 8.0, 3.0],
            size_std: [0.05, 0.1, 0.05],
        },
        ClassPrior {
            name: "pedestrian".into(),
            size_mean: [0.7, 0.7, 1.75],
            size_std: [0.05, 0.05, 0.05],
        },
    ]
}

/// One simulated frame of ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtFrame {
    pub frame_index: usize,
    pub objects: Vec<AnnotatedObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionFrame {
    pub frame_index: usize,
    pub detections: Vec<Detection>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Center and yaw of an object `k` frames after it spawned; `k` may be -1.
fn pose_at(spec: &ObjectSpec, k: i64, turn_cache: &mut Vec<[f64; 2]>) -> ([f64; 2], f64) {
    match spec.motion {
        MotionModel::ConstantVelocity { velocity } => {
            let t = k as f64;
            ([spec.start[0] + t * velocity[0], spec.start[1] + t * velocity[1]], spec.yaw)
        }
        MotionModel::ConstantTurn { speed, turn_rate } => {
            let yaw = spec.yaw + turn_rate * k as f64;
            if k < 0 {
                let (s, c) = spec.yaw.sin_cos();
                return ([spec.start[0] - speed * c, spec.start[1] - speed * s], yaw);
            }
            // turn_cache[k] is the center k frames after spawn.
            if turn_cache.is_empty() {
                turn_cache.push(spec.start);
            }
            while turn_cache.len() <= k as usize {
                let n = turn_cache.len();
                let heading = spec.yaw + turn_rate * n as f64;
                let (s, c) = heading.sin_cos();
                let prev = turn_cache[n - 1];
                turn_cache.push([prev[0] + speed * c, prev[1] + speed * s]);
            }
            (turn_cache[k as usize], yaw)
        }
    }
}

fn random_objects(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<ObjectSpec> {
    let mut out: Vec<ObjectSpec> = Vec::with_capacity(cfg.random_objects);
    let half = 0.8 * cfg.extent;
    for _ in 0..cfg.random_objects {
        let class_id = rng.random_range(0..cfg.classes.len());
        let mut start = [0.0; 2];
        for _attempt in 0..100 {
            start = [rng.random_range(-half..half), rng.random_range(-half..half)];
            let clear = out
                .iter()
                .chain(cfg.objects.iter())
                .all(|o| (o.start[0] - start[0]).hypot(o.start[1] - start[1]) >= cfg.min_separation);
            if clear {
                break;
            }
        }
        let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let speed = rng.random_range(0.0..=cfg.max_speed);
        let turns = rng.random::<f64>() < cfg.turn_fraction;
        let turn_rate = rng.random_range(-1.0..=1.0) * cfg.max_turn_rate;
        let prior = &cfg.classes[class_id];
        let mut size = [0.0; 3];
        for (k, s) in size.iter_mut().enumerate() {
            *s = prior.size_mean[k] * (prior.size_std[k] * normal(rng)).exp();
        }
        let motion = if turns {
            MotionModel::ConstantTurn { speed, turn_rate }
        } else {
            let (s, c) = yaw.sin_cos();
            MotionModel::ConstantVelocity {
                velocity: [speed * c, speed * s],
            }
        };
        out.push(ObjectSpec {
            class_id,
            start,
            yaw,
            size: Some(size),
            motion,
            spawn_frame: 0,
            despawn_frame: None,
        });
    }
    out
}

/// Ground-truth frames for a scenario. Object ids are 1-based indices into
/// the hand-placed objects followed by the random ones.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Vec<GtFrame>, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut specs = cfg.objects.clone();
    specs.extend(random_objects(cfg, &mut rng));

    let mut frames: Vec<GtFrame> = (0..cfg.num_frames)
        .map(|frame_index| GtFrame {
            frame_index,
            objects: Vec::new(),
        })
        .collect();
    for (idx, spec) in specs.iter().enumerate() {
        let prior = &cfg.classes[spec.class_id];
        let [w, l, h] = spec.size.unwrap_or(prior.size_mean);
        let end = spec.despawn_frame.unwrap_or(cfg.num_frames).min(cfg.num_frames);
        let mut cache = Vec::new();
        let mut previous = pose_at(spec, -1, &mut cache).0;
        for t in spec.spawn_frame..end {
            let (center, yaw) = pose_at(spec, (t - spec.spawn_frame) as i64, &mut cache);
            let velocity = [center[0] - previous[0], center[1] - previous[1]];
            previous = center;
            if center[0].abs() >= cfg.extent || center[1].abs() >= cfg.extent {
                continue;
            }
            let bbox = Box3D::new(center[0], center[1], 0.5 * h, w, l, h, normalize_yaw(yaw))
                .map_err(|e| SimError::Invalid(e.to_string()))?;
            frames[t].objects.push(AnnotatedObject {
                bbox,
                class_id: spec.class_id,
                velocity,
                object_id: idx as u64 + 1,
            });
        }
    }
    Ok(frames)
}

fn uniform_in(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    let u: f64 = rng.random();
    range[0] + (range[1] - range[0]) * u
}

/// Applies the detector model to ground-truth frames.
pub fn perturb_detections(
    frames: &[GtFrame],
    noise: &NoiseModel,
    classes: &[ClassPrior],
    extent: f64,
    seed: u64,
) -> Result<Vec<DetectionFrame>, SimError> {
    noise.validate()?;
    if classes.is_empty() {
        return invalid("at least one class is required");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        let mut detections = Vec::new();
        for obj in &frame.objects {
            let u_miss: f64 = rng.random();
            let zc = [normal(&mut rng), normal(&mut rng)];
            let zs = [normal(&mut rng), normal(&mut rng), normal(&mut rng)];
            let zy = normal(&mut rng);
            let zv = [normal(&mut rng), normal(&mut rng)];
            let score = uniform_in(&mut rng, noise.tp_score);
            if u_miss < noise.miss_probability {
                continue;
            }
            let b = &obj.bbox;
            let bbox = Box3D::new(
                b.cx + noise.center_sigma * zc[0],
                b.cy + noise.center_sigma * zc[1],
                b.cz,
                b.w * (noise.size_sigma * zs[0]).exp(),
                b.l * (noise.size_sigma * zs[1]).exp(),
                b.h * (noise.size_sigma * zs[2]).exp(),
                b.yaw + noise.yaw_sigma * zy,
            )
            .map_err(|e| SimError::Invalid(e.to_string()))?;
            detections.push(Detection {
                bbox,
                class_id: obj.class_id,
                score,
                velocity: [
                    obj.velocity[0] + noise.velocity_sigma * zv[0],
                    obj.velocity[1] + noise.velocity_sigma * zv[1],
                ],
            });
        }
        let whole = noise.false_positive_rate.floor();
        let extra = rng.random::<f64>() < noise.false_positive_rate - whole;
        let count = whole as usize + usize::from(extra);
        for _ in 0..count {
            let class_id = rng.random_range(0..classes.len());
            let [w, l, h] = classes[class_id].size_mean;
            let x = rng.random_range(-extent..extent);
            let y = rng.random_range(-extent..extent);
            let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let score = uniform_in(&mut rng, noise.fp_score);
            detections.push(Detection {
                bbox: Box3D::new(x, y, 0.5 * h, w, l, h, yaw).map_err(|e| SimError::Invalid(e.to_string()))?,
                class_id,
                score,
                velocity: [0.0, 0.0],
            });
        }
        out.push(DetectionFrame {
            frame_index: frame.frame_index,
            detections,
        });
    }
    Ok(out)
}

/// Occupancy features: point count, mean height, max height, mean
/// reflectance.
pub const OCCUPANCY_CHANNELS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFrame {
    pub features: FeatureMap,
    /// Points that landed inside the grid.
    pub points_emitted: usize,
    /// Points that fell outside the grid and were dropped.
    pub points_dropped: usize,
}

/// Samples `points_per_object` points uniformly inside each box plus
/// `clutter_points` ground points, then bins them into occupancy features.
pub fn sample_points_and_encode(
    objects: &[AnnotatedObject],
    points_per_object: usize,
    clutter_points: usize,
    spec: &GridSpec,
    seed: u64,
) -> EncodedFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<[f64; 4]> = Vec::with_capacity(objects.len() * points_per_object + clutter_points);
    for obj in objects {
        let b = &obj.bbox;
        let [c, s] = b.heading();
        for _ in 0..points_per_object {
            let a = rng.random_range(-0.5..0.5) * b.l;
            let q = rng.random_range(-0.5..0.5) * b.w;
            let z = b.bottom() + rng.random::<f64>() * b.h;
            let r: f64 = rng.random();
            points.push([b.cx + a * c - q * s, b.cy + a * s + q * c, z, r]);
        }
    }
    for _ in 0..clutter_points {
        let x = rng.random_range(spec.x_min..spec.x_max);
        let y = rng.random_range(spec.y_min..spec.y_max);
        let z = rng.random_range(-0.1..0.1);
        let r: f64 = rng.random::<f64>() * 0.2;
        points.push([x, y, z, r]);
    }
    encode_points(&points, spec)
}

/// Bins `(x, y, z, reflectance)` points into occupancy features.
pub fn encode_points(points: &[[f64; 4]], spec: &GridSpec) -> EncodedFrame {
    let mut count = vec![0usize; spec.num_cells()];
    let mut sum_z = vec![0.0; spec.num_cells()];
    let mut max_z = vec![f64::NEG_INFINITY; spec.num_cells()];
    let mut sum_r = vec![0.0; spec.num_cells()];
    let mut dropped = 0;
    for p in points {
        let (gx, gy) = spec.world_to_grid(p[0], p[1]);
        let Some((ix, iy)) = spec.cell_of(gx, gy) else {
            dropped += 1;
            continue;
        };
        let k = spec.flat(ix, iy);
        count[k] += 1;
        sum_z[k] += p[2];
        max_z[k] = max_z[k].max(p[2]);
        sum_r[k] += p[3];
    }
    let mut features = FeatureMap::zeros(*spec, OCCUPANCY_CHANNELS);
    for ix in 0..spec.num_cells_x {
        for iy in 0..spec.num_cells_y {
            let k = spec.flat(ix, iy);
            if count[k] == 0 {
                continue;
            }
            let n = count[k] as f64;
            features
                .cell_mut(ix, iy)
                .copy_from_slice(&[n, sum_z[k] / n, max_z[k], sum_r[k] / n]);
        }
    }
    EncodedFrame {
        features,
        points_emitted: points.len() - dropped,
        points_dropped: dropped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_object(motion: MotionModel, frames: usize) -> ScenarioConfig {
        ScenarioConfig {
            seed: 1,
            num_frames: frames,
            extent: 50.0,
            classes: default_classes(),
            objects: vec![ObjectSpec {
                class_id: 0,
                start: [0.0, 0.0],
                yaw: 0.0,
                size: None,
                motion,
                spawn_frame: 0,
                despawn_frame: None,
            }],
            random_objects: 0,
            max_speed: 1.0,
            turn_fraction: 0.0,
            max_turn_rate: 0.0,
            min_separation: 6.0,
            noise: NoiseModel::default(),
        }
    }

    #[test]
    fn constant_velocity_kinematics() {
        let cfg = one_object(MotionModel::ConstantVelocity { velocity: [1.0, 0.0] }, 5);
        let frames = generate_scenario(&cfg).unwrap();
        let xs: Vec<[f64; 2]> = frames.iter().map(|f| f.objects[0].bbox.center()).collect();
        assert_eq!(xs, vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [4.0, 0.0]]);
        assert!(frames.iter().all(|f| f.objects[0].velocity == [1.0, 0.0]));
    }

    #[test]
    fn turning_yaw_and_velocity_consistency() {
        let w = 0.1;
        let cfg = one_object(MotionModel::ConstantTurn { speed: 1.0, turn_rate: w }, 20);
        let frames = generate_scenario(&cfg).unwrap();
        for (t, f) in frames.iter().enumerate() {
            let o = &f.objects[0];
            assert!((o.bbox.yaw - normalize_yaw(w * t as f64)).abs() < 1e-12);
            if t > 0 {
                let p = frames[t - 1].objects[0].bbox.center();
                let c = o.bbox.center();
                assert_eq!(o.velocity, [c[0] - p[0], c[1] - p[1]]);
                // the step follows the current heading
                let (s, co) = o.bbox.yaw.sin_cos();
                assert!((o.velocity[0] - co).abs() < 1e-9 && (o.velocity[1] - s).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn spawn_despawn_and_extent() {
        let mut cfg = one_object(MotionModel::ConstantVelocity { velocity: [10.0, 0.0] }, 10);
        cfg.objects[0].spawn_frame = 2;
        cfg.objects[0].despawn_frame = Some(8);
        let frames = generate_scenario(&cfg).unwrap();
        let present: Vec<usize> = frames.iter().filter(|f| !f.objects.is_empty()).map(|f| f.frame_index).collect();
        // x = 0, 10, 20, 30, 40, then 50 leaves the extent
        assert_eq!(present, vec![2, 3, 4, 5, 6]);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let cfg = ScenarioConfig::default_scenario(9);
        let a = serde_json::to_string(&generate_scenario(&cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&generate_scenario(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validation_errors() {
        let mut cfg = ScenarioConfig::default_scenario(0);
        cfg.noise.miss_probability = 1.5;
        assert!(generate_scenario(&cfg).is_err());
        let mut cfg = ScenarioConfig::default_scenario(0);
        cfg.classes.clear();
        assert!(generate_scenario(&cfg).is_err());
    }

    #[test]
    fn identity_noise_and_full_miss() {
        let cfg = ScenarioConfig::default_scenario(4);
        let frames = generate_scenario(&cfg).unwrap();
        let dets = perturb_detections(&frames, &NoiseModel::default(), &cfg.classes, cfg.extent, 1).unwrap();
        for (f, d) in frames.iter().zip(&dets) {
            assert_eq!(f.objects.len(), d.detections.len());
            for (o, det) in f.objects.iter().zip(&d.detections) {
                assert_eq!(o.bbox, det.bbox);
                assert_eq!(o.velocity, det.velocity);
                assert_eq!(det.score, 1.0);
            }
        }
        let miss = NoiseModel {
            miss_probability: 1.0,
            ..Default::default()
        };
        let dets = perturb_detections(&frames, &miss, &cfg.classes, cfg.extent, 1).unwrap();
        assert!(dets.iter().all(|d| d.detections.is_empty()));
    }

    #[test]
    fn encoder_support_and_conservation() {
        let spec = GridSpec::square(10.0, 0.5).unwrap();
        let empty = sample_points_and_encode(&[], 0, 0, &spec, 0);
        assert!(empty.features.values().iter().all(|v| *v == 0.0));

        let obj = AnnotatedObject {
            bbox: Box3D::new(1.0, 2.0, 0.8, 2.0, 4.0, 1.6, 0.4).unwrap(),
            class_id: 0,
            velocity: [0.0; 2],
            object_id: 1,
        };
        let enc = sample_points_and_encode(&[obj], 5000, 0, &spec, 3);
        assert_eq!(enc.points_emitted, 5000);
        let mut total = 0.0;
        for ix in 0..spec.num_cells_x {
            for iy in 0..spec.num_cells_y {
                let n = enc.features.get(ix, iy, 0);
                total += n;
                if n > 0.0 {
                    // some corner of the cell square must touch the footprint
                    let (x0, y0) = spec.grid_to_world(ix as f64, iy as f64);
                    let grown = Box3D { w: obj.bbox.w + 2.0 * spec.cell, l: obj.bbox.l + 2.0 * spec.cell, ..obj.bbox };
                    assert!(grown.contains_bev(x0 + 0.5 * spec.cell, y0 + 0.5 * spec.cell));
                    let cell = enc.features.cell(ix, iy);
                    assert!(cell[2] >= cell[1] && cell[2] <= obj.bbox.top());
                }
            }
        }
        assert_eq!(total, 5000.0);
    }
}
