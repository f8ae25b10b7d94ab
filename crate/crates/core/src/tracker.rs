//! Greedy center-based tracking with velocity back-projection.
//!
//! Each frame, detections are visited in descending confidence. A detection
//! is moved back one frame by subtracting its velocity and takes the nearest
//! still-unmatched track of its class; if that track is within the class
//! threshold the detection inherits its id, otherwise a new id is minted.
//! Tracks left unmatched coast forward by their last velocity for up to
//! `max_age` frames before they are dropped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decode::Detection;
use crate::geometry::Box3D;

pub const DEFAULT_MAX_AGE: u32 = 3;
pub const VEHICLE_THRESHOLD: f64 = 4.0;
pub const PEDESTRIAN_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackerError {
    #[error("matching threshold for class {class} must be positive and finite, got {value}")]
    BadThreshold { class: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    pub class_id: usize,
    /// Box of the last matched detection; its center is advanced while coasting.
    #[serde(rename = "box")]
    pub bbox: Box3D,
    /// Meters per frame.
    pub velocity: [f64; 2],
    pub score: f64,
    /// Frames since the last match (0 = matched this frame).
    pub age: u32,
}

impl Track {
    pub fn center(&self) -> [f64; 2] {
        self.bbox.center()
    }

    pub fn is_active(&self) -> bool {
        self.age == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerConfig {
    /// Matching distance per class, meters. Classes past the end use
    /// `default_threshold`.
    pub class_thresholds: Vec<f64>,
    #[serde(default = "default_threshold")]
    pub default_threshold: f64,
    #[serde(default = "default_max_age")]
    pub max_age: u32,
}

fn default_threshold() -> f64 {
    VEHICLE_THRESHOLD
}

fn default_max_age() -> u32 {
    DEFAULT_MAX_AGE
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            class_thresholds: Vec::new(),
            default_threshold: VEHICLE_THRESHOLD,
            max_age: DEFAULT_MAX_AGE,
        }
    }
}

impl TrackerConfig {
    pub fn new(class_thresholds: Vec<f64>, max_age: u32) -> Result<Self, TrackerError> {
        let cfg = Self {
            class_thresholds,
            default_threshold: VEHICLE_THRESHOLD,
            max_age,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TrackerError> {
        let all = self
            .class_thresholds
            .iter()
            .copied()
            .enumerate()
            .chain(std::iter::once((self.class_thresholds.len(), self.default_threshold)));
        for (class, value) in all {
            if !(value.is_finite() && value > 0.0) {
                return Err(TrackerError::BadThreshold { class, value });
            }
        }
        Ok(())
    }

    pub fn threshold(&self, class_id: usize) -> f64 {
        self.class_thresholds
            .get(class_id)
            .copied()
            .unwrap_or(self.default_threshold)
    }
}

/// Row-major `detections x tracks` distances.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl CostMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Distance from each detection's back-projected center (center minus
/// velocity) to each track center; `+inf` across classes.
pub fn cost_matrix(dets: &[Detection], tracks: &[Track]) -> CostMatrix {
    let mut data = Vec::with_capacity(dets.len() * tracks.len());
    for d in dets {
        let px = d.bbox.cx - d.velocity[0];
        let py = d.bbox.cy - d.velocity[1];
        data.extend(tracks.iter().map(|t| {
            if t.class_id == d.class_id {
                (px - t.bbox.cx).hypot(py - t.bbox.cy)
            } else {
                f64::INFINITY
            }
        }));
    }
    CostMatrix {
        rows: dets.len(),
        cols: tracks.len(),
        data,
    }
}

/// One tracking session over a single frame stream.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self, TrackerError> {
        config.validate()?;
        Ok(Self {
            config,
            tracks: Vec::new(),
            next_id: 1,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Current track set, including coasting tracks.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Tracks matched or created in the last frame.
    pub fn active_tracks(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.is_active())
    }

    fn mint_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Advances the session by one frame and returns the new track set:
    /// matched and new tracks in detection order, then coasting tracks in
    /// their previous order.
    pub fn step(&mut self, dets: &[Detection]) -> &[Track] {
        let mut order: Vec<&Detection> = dets.iter().collect();
        order.sort_by(|a, b| b.score.total_cmp(&a.score));

        let prev = std::mem::take(&mut self.tracks);
        let centers: Vec<(f64, f64, usize)> = prev.iter().map(|t| (t.bbox.cx, t.bbox.cy, t.class_id)).collect();
        let mut matched = vec![false; prev.len()];
        let mut next = Vec::with_capacity(order.len() + prev.len());

        for det in order {
            let px = det.bbox.cx - det.velocity[0];
            let py = det.bbox.cy - det.velocity[1];
            // Squared distances order the same way as distances.
            let mut best: Option<(usize, f64)> = None;
            for (j, &(tx, ty, class_id)) in centers.iter().enumerate() {
                if matched[j] || class_id != det.class_id {
                    continue;
                }
                let d2 = (px - tx) * (px - tx) + (py - ty) * (py - ty);
                if best.is_none_or(|(_, b)| d2 < b) {
                    best = Some((j, d2));
                }
            }
            let id = match best {
                Some((j, d2)) if d2.sqrt() <= self.config.threshold(det.class_id) => {
                    matched[j] = true;
                    prev[j].id
                }
                _ => self.mint_id(),
            };
            next.push(Track {
                id,
                class_id: det.class_id,
                bbox: det.bbox,
                velocity: det.velocity,
                score: det.score,
                age: 0,
            });
        }

        for (j, mut t) in prev.into_iter().enumerate() {
            if matched[j] || t.age >= self.config.max_age {
                continue;
            }
            t.age += 1;
            t.bbox.cx += t.velocity[0];
            t.bbox.cy += t.velocity[1];
            next.push(t);
        }
        self.tracks = next;
        &self.tracks
    }
}
