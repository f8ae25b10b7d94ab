//! First-stage training targets: size-adaptive Gaussian heatmaps, dense
//! regression channels at object centers, and the second-stage proposal
//! sampler.

use log::warn;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou_3d, Box3D};
use crate::grid::{FeatureMap, GridSpec};

/// Smallest Gaussian radius, in cells.
pub const MIN_RADIUS: f64 = 2.0;
pub const DEFAULT_MIN_OVERLAP: f64 = 0.1;
pub const DEFAULT_POSITIVE_IOU: f64 = 0.55;
pub const DEFAULT_SAMPLE_COUNT: usize = 128;
/// Splats stop at this many standard deviations.
pub const SPLAT_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TargetError {
    #[error("box side lengths must be positive, got l={l} w={w} cells")]
    NonPositiveSize { l: f64, w: f64 },
    #[error("min_overlap must lie in (0, 1), got {0}")]
    MinOverlapOutOfRange(f64),
    #[error("object {object_id} has class {class_id} but only {num_classes} classes exist")]
    ClassOutOfRange {
        object_id: u64,
        class_id: usize,
        num_classes: usize,
    },
    #[error("proposal list is empty")]
    EmptyProposals,
    #[error("sample count must be even, got {0}")]
    OddSampleCount(usize),
}

/// A ground-truth object in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedObject {
    #[serde(rename = "box")]
    pub bbox: Box3D,
    pub class_id: usize,
    /// Displacement since the previous frame, meters per frame.
    pub velocity: [f64; 2],
    pub object_id: u64,
}

/// Min of the three CornerNet corner-perturbation radii for an axis-aligned
/// `l x w` box (in cells). Each radius is the smallest positive root of the
/// equation `IoU(r) = min_overlap` for one way of moving the two corners.
pub fn cornernet_radius(l_cells: f64, w_cells: f64, min_overlap: f64) -> Result<f64, TargetError> {
    if !(l_cells > 0.0 && w_cells > 0.0) || !l_cells.is_finite() || !w_cells.is_finite() {
        return Err(TargetError::NonPositiveSize {
            l: l_cells,
            w: w_cells,
        });
    }
    if !(min_overlap > 0.0 && min_overlap < 1.0) {
        return Err(TargetError::MinOverlapOutOfRange(min_overlap));
    }
    let (h, w, o) = (l_cells, w_cells, min_overlap);
    let sum = h + w;
    let area = h * w;

    // Both corners shifted the same way: (h-r)(w-r) / (2hw - (h-r)(w-r)) = o.
    let c1 = area * (1.0 - o) / (1.0 + o);
    let r1 = (sum - (sum * sum - 4.0 * c1).sqrt()) / 2.0;

    // Both corners pulled inward: (h-2r)(w-2r) / hw = o.
    let b2 = 2.0 * sum;
    let c2 = (1.0 - o) * area;
    let r2 = (b2 - (b2 * b2 - 16.0 * c2).sqrt()) / 8.0;

    // Both corners pushed outward: hw / ((h+2r)(w+2r)) = o.
    let a3 = 4.0 * o;
    let b3 = 2.0 * o * sum;
    let c3 = (o - 1.0) * area;
    let r3 = (-b3 + (b3 * b3 - 4.0 * a3 * c3).sqrt()) / (2.0 * a3);

    Ok(r1.min(r2).min(r3))
}

/// Gaussian standard deviation in cells: CornerNet radius clamped below at
/// [`MIN_RADIUS`].
pub fn gaussian_radius(l_cells: f64, w_cells: f64, min_overlap: f64) -> Result<f64, TargetError> {
    Ok(cornernet_radius(l_cells, w_cells, min_overlap)?.max(MIN_RADIUS))
}

/// Dense target (or prediction) channels over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMaps {
    pub spec: GridSpec,
    /// `K` channels in `[0, 1]`.
    pub heatmap: FeatureMap,
    /// Sub-cell offset `(dx, dy)`, in cells.
    pub offset: FeatureMap,
    /// Box center height, meters.
    pub height: FeatureMap,
    /// `(ln w, ln l, ln h)`.
    pub log_size: FeatureMap,
    /// `(sin yaw, cos yaw)`.
    pub rot: FeatureMap,
    /// Meters per frame.
    pub vel: FeatureMap,
    /// Indexed by [`GridSpec::flat`].
    pub valid_mask: Vec<bool>,
}

/// Channel counts of the regression heads, in storage order.
pub const REGRESSION_CHANNELS: [(&str, usize); 5] = [
    ("offset", 2),
    ("height", 1),
    ("log_size", 3),
    ("rot", 2),
    ("vel", 2),
];

impl TargetMaps {
    pub fn zeros(spec: GridSpec, num_classes: usize) -> Self {
        Self {
            spec,
            heatmap: FeatureMap::zeros(spec, num_classes),
            offset: FeatureMap::zeros(spec, 2),
            height: FeatureMap::zeros(spec, 1),
            log_size: FeatureMap::zeros(spec, 3),
            rot: FeatureMap::zeros(spec, 2),
            vel: FeatureMap::zeros(spec, 2),
            valid_mask: vec![false; spec.num_cells()],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.heatmap.channels()
    }

    pub fn regression_maps(&self) -> [&FeatureMap; 5] {
        [&self.offset, &self.height, &self.log_size, &self.rot, &self.vel]
    }

    pub fn regression_maps_mut(&mut self) -> [&mut FeatureMap; 5] {
        [
            &mut self.offset,
            &mut self.height,
            &mut self.log_size,
            &mut self.rot,
            &mut self.vel,
        ]
    }

    pub fn is_valid(&self, ix: usize, iy: usize) -> bool {
        self.valid_mask[self.spec.flat(ix, iy)]
    }

    pub fn valid_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let ny = self.spec.num_cells_y;
        self.valid_mask
            .iter()
            .enumerate()
            .filter(|(_, v)| **v)
            .map(move |(i, _)| (i / ny, i % ny))
    }
}

/// Two objects whose centers fell into the same cell; the later one was kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CenterCollision {
    pub cell: (usize, usize),
    pub overwritten_object_id: u64,
    pub kept_object_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapRender {
    pub heatmap: FeatureMap,
    pub skipped_out_of_range: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetRender {
    pub maps: TargetMaps,
    pub skipped_out_of_range: usize,
    pub collisions: Vec<CenterCollision>,
}

struct Located {
    cell: (usize, usize),
    offset: (f64, f64),
}

fn locate(spec: &GridSpec, obj: &AnnotatedObject) -> Option<Located> {
    let (gx, gy) = spec.world_to_grid(obj.bbox.cx, obj.bbox.cy);
    let cell = spec.cell_of(gx, gy)?;
    Some(Located {
        cell,
        offset: (gx - cell.0 as f64, gy - cell.1 as f64),
    })
}

fn check_classes(objects: &[AnnotatedObject], num_classes: usize) -> Result<(), TargetError> {
    match objects.iter().find(|o| o.class_id >= num_classes) {
        Some(o) => Err(TargetError::ClassOutOfRange {
            object_id: o.object_id,
            class_id: o.class_id,
            num_classes,
        }),
        None => Ok(()),
    }
}

/// Writes `exp(-d^2 / 2 sigma^2)` around `center` into one channel, keeping
/// the element-wise max with what is already there. Returns the number of
/// cells visited.
pub fn splat_gaussian(map: &mut FeatureMap, channel: usize, center: (usize, usize), sigma: f64) -> usize {
    let spec = *map.spec();
    let reach = SPLAT_SIGMAS * sigma;
    let reach_sq = reach * reach;
    let span = reach.floor() as i64;
    let two_var = 2.0 * sigma * sigma;
    let (cx, cy) = (center.0 as i64, center.1 as i64);
    let mut touched = 0;
    for dx in -span..=span {
        let ix = cx + dx;
        if ix < 0 || ix >= spec.num_cells_x as i64 {
            continue;
        }
        for dy in -span..=span {
            let iy = cy + dy;
            if iy < 0 || iy >= spec.num_cells_y as i64 {
                continue;
            }
            let d2 = (dx * dx + dy * dy) as f64;
            if d2 > reach_sq {
                continue;
            }
            let v = (-d2 / two_var).exp();
            let (ix, iy) = (ix as usize, iy as usize);
            if v > map.get(ix, iy, channel) {
                map.set(ix, iy, channel, v);
            }
            touched += 1;
        }
    }
    touched
}

/// Gaussian sigma (cells) for an object's footprint.
pub fn object_sigma(spec: &GridSpec, bbox: &Box3D, min_overlap: f64) -> Result<f64, TargetError> {
    gaussian_radius(bbox.l / spec.cell, bbox.w / spec.cell, min_overlap)
}

pub fn render_heatmap(
    objects: &[AnnotatedObject],
    spec: &GridSpec,
    num_classes: usize,
    min_overlap: f64,
) -> Result<HeatmapRender, TargetError> {
    check_classes(objects, num_classes)?;
    let mut heatmap = FeatureMap::zeros(*spec, num_classes);
    let mut skipped = 0;
    for obj in objects {
        let Some(loc) = locate(spec, obj) else {
            skipped += 1;
            continue;
        };
        let sigma = object_sigma(spec, &obj.bbox, min_overlap)?;
        splat_gaussian(&mut heatmap, obj.class_id, loc.cell, sigma);
    }
    Ok(HeatmapRender {
        heatmap,
        skipped_out_of_range: skipped,
    })
}

/// Fills the regression channels and validity mask at each object's center
/// cell. The returned maps have an all-zero heatmap with `num_classes`
/// channels.
pub fn render_regression(
    objects: &[AnnotatedObject],
    spec: &GridSpec,
    num_classes: usize,
) -> Result<TargetRender, TargetError> {
    check_classes(objects, num_classes)?;
    let mut maps = TargetMaps::zeros(*spec, num_classes);
    let mut owner: Vec<Option<u64>> = vec![None; spec.num_cells()];
    let mut skipped = 0;
    let mut collisions = Vec::new();
    for obj in objects {
        let Some(loc) = locate(spec, obj) else {
            skipped += 1;
            continue;
        };
        let (ix, iy) = loc.cell;
        let flat = spec.flat(ix, iy);
        if let Some(prev) = owner[flat] {
            warn!(
                "objects {prev} and {} share center cell ({ix}, {iy}); keeping {}",
                obj.object_id, obj.object_id
            );
            collisions.push(CenterCollision {
                cell: loc.cell,
                overwritten_object_id: prev,
                kept_object_id: obj.object_id,
            });
        }
        owner[flat] = Some(obj.object_id);
        let b = &obj.bbox;
        let (s, c) = b.yaw.sin_cos();
        maps.offset.cell_mut(ix, iy).copy_from_slice(&[loc.offset.0, loc.offset.1]);
        maps.height.cell_mut(ix, iy)[0] = b.cz;
        maps.log_size
            .cell_mut(ix, iy)
            .copy_from_slice(&[b.w.ln(), b.l.ln(), b.h.ln()]);
        maps.rot.cell_mut(ix, iy).copy_from_slice(&[s, c]);
        maps.vel.cell_mut(ix, iy).copy_from_slice(&obj.velocity);
        maps.valid_mask[flat] = true;
    }
    Ok(TargetRender {
        maps,
        skipped_out_of_range: skipped,
        collisions,
    })
}

/// Heatmap plus regression channels in one pass.
pub fn render_targets(
    objects: &[AnnotatedObject],
    spec: &GridSpec,
    num_classes: usize,
    min_overlap: f64,
) -> Result<TargetRender, TargetError> {
    let hm = render_heatmap(objects, spec, num_classes, min_overlap)?;
    let mut out = render_regression(objects, spec, num_classes)?;
    out.maps.heatmap = hm.heatmap;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalSample {
    pub proposal: Box3D,
    pub positive: bool,
    /// Index into the ground-truth list of the best-overlapping object
    /// (positives only).
    pub matched_gt: Option<usize>,
    pub iou: f64,
}

/// Draws up to `n` proposals aiming for `n / 2` positives and `n / 2`
/// negatives; a short side is topped up by the other. Positives come first
/// in the output.
pub fn sample_proposals(
    proposals: &[Box3D],
    gts: &[AnnotatedObject],
    n: usize,
    pos_iou: f64,
    seed: u64,
) -> Result<Vec<ProposalSample>, TargetError> {
    if proposals.is_empty() {
        return Err(TargetError::EmptyProposals);
    }
    if n % 2 != 0 {
        return Err(TargetError::OddSampleCount(n));
    }
    let labelled: Vec<ProposalSample> = proposals
        .iter()
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for (j, gt) in gts.iter().enumerate() {
                let iou = iou_3d(p, &gt.bbox);
                if best.is_none_or(|(_, b)| iou > b) {
                    best = Some((j, iou));
                }
            }
            let (j, iou) = best.map_or((None, 0.0), |(j, iou)| (Some(j), iou));
            let positive = iou >= pos_iou;
            ProposalSample {
                proposal: *p,
                positive,
                matched_gt: if positive { j } else { None },
                iou,
            }
        })
        .collect();
    let (pos, neg): (Vec<_>, Vec<_>) = labelled.into_iter().partition(|s| s.positive);

    let half = n / 2;
    let mut n_pos = pos.len().min(half);
    let mut n_neg = neg.len().min(half);
    if n_pos < half {
        n_neg = neg.len().min(n - n_pos);
    } else if n_neg < half {
        n_pos = pos.len().min(n - n_neg);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_pos + n_neg);
    out.extend(sample(&mut rng, pos.len(), n_pos).into_iter().map(|i| pos[i]));
    out.extend(sample(&mut rng, neg.len(), n_neg).into_iter().map(|i| neg[i]));
    Ok(out)
}
