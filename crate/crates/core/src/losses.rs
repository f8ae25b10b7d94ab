//! Training losses with analytic gradients: penalty-reduced focal loss on
//! heatmaps, masked L1 on regression channels and binary cross-entropy on
//! the second-stage score.

use thiserror::Error;

use crate::targets::TargetMaps;

/// Clamp applied to every probability that ends up inside a log.
pub const PROB_EPS: f64 = 1e-6;
pub const DEFAULT_ALPHA: f64 = 2.0;
pub const DEFAULT_BETA: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("shape mismatch: prediction has {pred} values, target has {target}")]
    ShapeMismatch { pred: usize, target: usize },
    #[error("prediction {value} at index {index} is outside (0, 1); clamp before calling")]
    PredOutOfRange { index: usize, value: f64 },
}

/// Loss value and its gradient with respect to the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Vec<f64>,
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn check_len(pred: usize, target: usize) -> Result<(), LossError> {
    if pred != target {
        return Err(LossError::ShapeMismatch { pred, target });
    }
    Ok(())
}

/// Penalty-reduced focal loss, normalized by the number of cells whose
/// target is exactly 1 (at least 1).
pub fn focal_loss(pred: &[f64], target: &[f64], alpha: f64, beta: f64) -> Result<LossValue, LossError> {
    check_len(pred.len(), target.len())?;
    if let Some((index, &value)) = pred.iter().enumerate().find(|(_, p)| !(**p > 0.0 && **p < 1.0)) {
        return Err(LossError::PredOutOfRange { index, value });
    }
    let num_pos = target.iter().filter(|t| **t == 1.0).count().max(1) as f64;
    let mut sum = 0.0;
    let mut gradient = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(target) {
        let (term, dterm) = if t == 1.0 {
            let q = 1.0 - p;
            let ln_p = p.ln();
            (
                q.powf(alpha) * ln_p,
                -alpha * q.powf(alpha - 1.0) * ln_p + q.powf(alpha) / p,
            )
        } else {
            let penalty = (1.0 - t).powf(beta);
            let ln_q = (1.0 - p).ln();
            (
                penalty * p.powf(alpha) * ln_q,
                penalty * (alpha * p.powf(alpha - 1.0) * ln_q - p.powf(alpha) / (1.0 - p)),
            )
        };
        sum += term;
        gradient.push(-dterm / num_pos);
    }
    Ok(LossValue {
        value: -sum / num_pos,
        gradient,
    })
}

/// Mean absolute error over the masked cells of a `cells x channels` array.
/// Unmasked cells contribute nothing to value or gradient; an empty mask
/// gives zero loss.
pub fn masked_l1(pred: &[f64], target: &[f64], mask: &[bool], channels: usize) -> Result<LossValue, LossError> {
    check_len(pred.len(), target.len())?;
    check_len(pred.len(), mask.len() * channels)?;
    let count = mask.iter().filter(|m| **m).count() * channels;
    let mut gradient = vec![0.0; pred.len()];
    if count == 0 {
        return Ok(LossValue { value: 0.0, gradient });
    }
    let n = count as f64;
    let mut sum = 0.0;
    for (cell, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        for k in cell * channels..(cell + 1) * channels {
            let d = pred[k] - target[k];
            sum += d.abs();
            gradient[k] = if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            };
        }
    }
    Ok(LossValue { value: sum / n, gradient })
}

/// Interleaves the regression channels of `maps` into a `cells x 10` array
/// in the order offset, height, log_size, rot, vel.
pub fn stack_regression(maps: &TargetMaps) -> Vec<f64> {
    let cells = maps.spec.num_cells();
    let heads = maps.regression_maps();
    let width: usize = heads.iter().map(|m| m.channels()).sum();
    let mut out = Vec::with_capacity(cells * width);
    for cell in 0..cells {
        for head in heads {
            let c = head.channels();
            out.extend_from_slice(&head.values()[cell * c..(cell + 1) * c]);
        }
    }
    out
}

/// L1 loss over all regression heads at ground-truth centers. The gradient
/// is laid out as in [`stack_regression`].
pub fn l1_regression_loss(pred: &TargetMaps, target: &TargetMaps) -> Result<LossValue, LossError> {
    let p = stack_regression(pred);
    let t = stack_regression(target);
    let channels = p.len() / pred.spec.num_cells();
    masked_l1(&p, &t, &target.valid_mask, channels)
}

/// Binary cross-entropy on the second-stage score. `pred` is clamped.
pub fn score_bce(pred: f64, target: f64) -> LossValue {
    let p = clamp_prob(pred);
    LossValue {
        value: -target * p.ln() - (1.0 - target) * (1.0 - p).ln(),
        gradient: vec![(p - target) / (p * (1.0 - p))],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub heatmap: f64,
    pub regression: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            heatmap: 1.0,
            regression: 1.0,
        }
    }
}

/// Weighted sum of the focal and L1 first-stage losses.
pub fn first_stage_loss(
    pred: &TargetMaps,
    target: &TargetMaps,
    weights: LossWeights,
    alpha: f64,
    beta: f64,
) -> Result<f64, LossError> {
    let clamped: Vec<f64> = pred.heatmap.values().iter().map(|p| clamp_prob(*p)).collect();
    let focal = focal_loss(&clamped, target.heatmap.values(), alpha, beta)?;
    let l1 = l1_regression_loss(pred, target)?;
    Ok(weights.heatmap * focal.value + weights.regression * l1.value)
}
