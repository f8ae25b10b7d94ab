//! First-stage inference: heatmap peaks, regression gather, box assembly
//! and top-k after NMS.

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_yaw, rotated_nms, Box3D, NmsItem};
use crate::grid::FeatureMap;
use crate::targets::TargetMaps;

pub const DEFAULT_SCORE_FLOOR: f64 = 0.1;
pub const DEFAULT_NMS_IOU: f64 = 0.2;
pub const DEFAULT_TOP_K: usize = 500;
pub const DEFAULT_MAX_PEAKS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: Box3D,
    pub class_id: usize,
    pub score: f64,
    pub velocity: [f64; 2],
}

impl NmsItem for Detection {
    fn nms_box(&self) -> &Box3D {
        &self.bbox
    }
    fn nms_score(&self) -> f64 {
        self.score
    }
    fn nms_class(&self) -> usize {
        self.class_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub cell: (usize, usize),
    pub class_id: usize,
    pub value: f64,
}

/// True if `(ix, iy)` in channel `c` is strictly greater than every in-grid
/// 8-neighbor.
pub fn is_strict_local_max(map: &FeatureMap, ix: usize, iy: usize, c: usize) -> bool {
    let spec = map.spec();
    let v = map.get(ix, iy, c);
    let x_lo = ix.saturating_sub(1);
    let x_hi = (ix + 1).min(spec.num_cells_x - 1);
    let y_lo = iy.saturating_sub(1);
    let y_hi = (iy + 1).min(spec.num_cells_y - 1);
    for nx in x_lo..=x_hi {
        for ny in y_lo..=y_hi {
            if (nx, ny) != (ix, iy) && !(v > map.get(nx, ny, c)) {
                return false;
            }
        }
    }
    true
}

/// Strict 8-neighbor maxima at or above `score_floor`, best first, at most
/// `max_peaks`. Ties are ordered by class, then row, then column.
pub fn extract_peaks(heatmap: &FeatureMap, max_peaks: usize, score_floor: f64) -> Vec<Peak> {
    let spec = heatmap.spec();
    let mut peaks = Vec::new();
    for c in 0..heatmap.channels() {
        for ix in 0..spec.num_cells_x {
            for iy in 0..spec.num_cells_y {
                let v = heatmap.get(ix, iy, c);
                if v >= score_floor && is_strict_local_max(heatmap, ix, iy, c) {
                    peaks.push(Peak {
                        cell: (ix, iy),
                        class_id: c,
                        value: v,
                    });
                }
            }
        }
    }
    // Collection order is already (class, row, column); a stable sort keeps it for ties.
    peaks.sort_by(|a, b| b.value.total_cmp(&a.value));
    peaks.truncate(max_peaks);
    peaks
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    pub detections: Vec<Detection>,
    /// Peaks whose regression values could not form a valid box.
    pub dropped: usize,
}

/// Assembles the box stored at one cell of the regression channels.
pub fn box_at(maps: &TargetMaps, ix: usize, iy: usize) -> Option<(Box3D, [f64; 2])> {
    let off = maps.offset.cell(ix, iy);
    let (x, y) = maps
        .spec
        .grid_to_world(ix as f64 + off[0], iy as f64 + off[1]);
    let cz = maps.height.cell(ix, iy)[0];
    let ls = maps.log_size.cell(ix, iy);
    let rot = maps.rot.cell(ix, iy);
    let vel = maps.vel.cell(ix, iy);
    if !(vel[0].is_finite() && vel[1].is_finite() && rot[0].is_finite() && rot[1].is_finite()) {
        return None;
    }
    let yaw = normalize_yaw(rot[0].atan2(rot[1]));
    let bbox = Box3D::new(x, y, cz, ls[0].exp(), ls[1].exp(), ls[2].exp(), yaw).ok()?;
    Some((bbox, [vel[0], vel[1]]))
}

pub fn decode_detections(maps: &TargetMaps, max_peaks: usize, score_floor: f64) -> DecodeOutput {
    let mut detections = Vec::new();
    let mut dropped = 0;
    for peak in extract_peaks(&maps.heatmap, max_peaks, score_floor) {
        match box_at(maps, peak.cell.0, peak.cell.1) {
            Some((bbox, velocity)) => detections.push(Detection {
                bbox,
                class_id: peak.class_id,
                score: peak.value,
                velocity,
            }),
            None => dropped += 1,
        }
    }
    DecodeOutput { detections, dropped }
}

/// Class-wise rotated NMS, then the `k` best.
pub fn select_top(dets: Vec<Detection>, nms_iou: f64, k: usize) -> Vec<Detection> {
    let mut kept = rotated_nms(dets, nms_iou);
    kept.truncate(k);
    kept
}
