//! Second stage: surface-center feature gathering, IoU-guided score target,
//! box refinement and geometric-mean score fusion.
//!
//! The learned MLP is replaced by the [`SecondStageScorer`] trait. Two
//! scorers ship with the crate: [`OracleScorer`], which scores each box by
//! its true 3D IoU with the ground truth, and [`RandomProjectionScorer`],
//! a fixed seeded linear model over the gathered features.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decode::Detection;
use crate::geometry::{iou_3d, Box3D, GeometryError};
use crate::grid::{FeatureMap, GridError};

/// Number of BEV sample points per box.
pub const SURFACE_POINTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RefineError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("refined box is invalid: {0}")]
    Geometry(#[from] GeometryError),
}

/// Additive center/yaw deltas and log-scale size deltas.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub d_cx: f64,
    pub d_cy: f64,
    pub d_cz: f64,
    pub d_log_w: f64,
    pub d_log_l: f64,
    pub d_log_h: f64,
    pub d_yaw: f64,
}

impl Refinement {
    /// The refinement that undoes `self`.
    pub fn inverse(&self) -> Self {
        Self {
            d_cx: -self.d_cx,
            d_cy: -self.d_cy,
            d_cz: -self.d_cz,
            d_log_w: -self.d_log_w,
            d_log_l: -self.d_log_l,
            d_log_h: -self.d_log_h,
            d_yaw: -self.d_yaw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedDetection {
    pub base: Detection,
    pub stage2_score: f64,
    pub fused_score: f64,
    pub refinement: Refinement,
}

impl RefinedDetection {
    /// The detection after refinement, scored by the fused confidence.
    pub fn to_detection(&self) -> Result<Detection, RefineError> {
        let mut d = apply_refinement(&self.base, &self.refinement)?;
        d.score = self.fused_score;
        Ok(d)
    }
}

/// Box center followed by the centers of the `+l`, `-l`, `+w` and `-w`
/// side faces, projected to BEV.
pub fn surface_center_points(b: &Box3D) -> [[f64; 2]; SURFACE_POINTS] {
    let [c, s] = b.heading();
    let (hl, hw) = (0.5 * b.l, 0.5 * b.w);
    [
        [b.cx, b.cy],
        [b.cx + hl * c, b.cy + hl * s],
        [b.cx - hl * c, b.cy - hl * s],
        [b.cx - hw * s, b.cy + hw * c],
        [b.cx + hw * s, b.cy - hw * c],
    ]
}

/// Bilinear features at the five surface points, concatenated in point
/// order. Points outside the grid are clamped to the border.
pub fn gather_features(map: &FeatureMap, b: &Box3D) -> Result<Vec<f64>, RefineError> {
    map.check_finite()?;
    gather_unchecked(map, b)
}

fn gather_unchecked(map: &FeatureMap, b: &Box3D) -> Result<Vec<f64>, RefineError> {
    let mut out = Vec::with_capacity(SURFACE_POINTS * map.channels());
    for [x, y] in surface_center_points(b) {
        let (gx, gy) = map.spec().world_to_grid(x, y);
        out.extend(map.bilinear(gx, gy)?);
    }
    Ok(out)
}

/// IoU-guided soft label: `min(1, max(0, 2 * iou - 0.5))`.
pub fn score_target(iou3d: f64) -> f64 {
    (2.0 * iou3d - 0.5).clamp(0.0, 1.0)
}

/// Geometric mean of the first- and second-stage confidences.
pub fn fuse_score(first: f64, second: f64) -> f64 {
    (first * second).sqrt()
}

pub fn apply_refinement(det: &Detection, r: &Refinement) -> Result<Detection, RefineError> {
    let b = &det.bbox;
    let bbox = Box3D::new(
        b.cx + r.d_cx,
        b.cy + r.d_cy,
        b.cz + r.d_cz,
        b.w * r.d_log_w.exp(),
        b.l * r.d_log_l.exp(),
        b.h * r.d_log_h.exp(),
        b.yaw + r.d_yaw,
    )?;
    Ok(Detection { bbox, ..*det })
}

/// Output of a second-stage head for one proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTwoOutput {
    pub score: f64,
    pub refinement: Refinement,
}

/// Stand-in for the second-stage MLP.
pub trait SecondStageScorer {
    fn score(&self, det: &Detection, features: &[f64]) -> StageTwoOutput;
}

/// Scores a proposal by the IoU-guided target of its best 3D IoU against
/// the frame's ground truth. Never refines.
#[derive(Debug, Clone, Default)]
pub struct OracleScorer {
    pub ground_truth: Vec<Box3D>,
}

impl OracleScorer {
    pub fn new(ground_truth: Vec<Box3D>) -> Self {
        Self { ground_truth }
    }
}

impl SecondStageScorer for OracleScorer {
    fn score(&self, det: &Detection, _features: &[f64]) -> StageTwoOutput {
        let best = self
            .ground_truth
            .iter()
            .map(|g| iou_3d(&det.bbox, g))
            .fold(0.0, f64::max);
        StageTwoOutput {
            score: score_target(best),
            refinement: Refinement::default(),
        }
    }
}

/// Sigmoid of a fixed random projection of the features.
#[derive(Debug, Clone)]
pub struct RandomProjectionScorer {
    weights: Vec<f64>,
    bias: f64,
}

impl RandomProjectionScorer {
    /// Weights are uniform in `[-1, 1]`, scaled by `1 / sqrt(feature_len)`.
    pub fn new(seed: u64, feature_len: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (feature_len.max(1) as f64).sqrt();
        let weights = (0..feature_len)
            .map(|_| rng.random_range(-1.0..=1.0) * scale)
            .collect();
        let bias = rng.random_range(-0.5..=0.5);
        Self { weights, bias }
    }
}

impl SecondStageScorer for RandomProjectionScorer {
    fn score(&self, _det: &Detection, features: &[f64]) -> StageTwoOutput {
        let z: f64 = self
            .weights
            .iter()
            .zip(features)
            .map(|(w, f)| w * f)
            .sum::<f64>()
            + self.bias;
        StageTwoOutput {
            score: 1.0 / (1.0 + (-z).exp()),
            refinement: Refinement::default(),
        }
    }
}

/// Runs the second stage over `dets`. The output is sorted by fused score,
/// best first; equal scores keep input order.
pub fn refine_detections<S: SecondStageScorer + ?Sized>(
    dets: &[Detection],
    map: &FeatureMap,
    scorer: &S,
) -> Result<Vec<RefinedDetection>, RefineError> {
    map.check_finite()?;
    let mut out = Vec::with_capacity(dets.len());
    for det in dets {
        let features = gather_unchecked(map, &det.bbox)?;
        let stage = scorer.score(det, &features);
        let stage2 = stage.score.clamp(0.0, 1.0);
        // Validates that the refined box is well formed.
        apply_refinement(det, &stage.refinement)?;
        out.push(RefinedDetection {
            base: *det,
            stage2_score: stage2,
            fused_score: fuse_score(det.score, stage2),
            refinement: stage.refinement,
        });
    }
    out.sort_by(|a, b| b.fused_score.total_cmp(&a.fused_score));
    Ok(out)
}
