//! Yaw-only 3D boxes, their bird's-eye-view footprints, rotated IoU and
//! class-wise rotated NMS.

use std::cmp::Ordering;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Intersection areas at or below this are treated as tangency.
pub const AREA_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("box dimensions must be finite and positive, got w={w} l={l} h={h}")]
    NonPositiveSize { w: f64, l: f64, h: f64 },
    #[error("box field `{0}` is not finite")]
    NonFinite(&'static str),
}

/// Wraps an angle into `[-pi, pi)`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    let mut wrapped = (yaw + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped >= PI {
        wrapped -= 2.0 * PI;
    }
    if wrapped < -PI {
        wrapped = -PI;
    }
    wrapped
}

/// Smallest signed difference `a - b` between two angles, in `[-pi, pi)`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_yaw(a - b)
}

/// A 3D box with yaw about the vertical axis.
///
/// `cx, cy` is the footprint center, `cz` the center height, `l` runs along
/// the heading direction and `w` across it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct Box3D {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub w: f64,
    pub l: f64,
    pub h: f64,
    pub yaw: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    cx: f64,
    cy: f64,
    cz: f64,
    w: f64,
    l: f64,
    h: f64,
    yaw: f64,
}

impl TryFrom<RawBox> for Box3D {
    type Error = GeometryError;

    fn try_from(r: RawBox) -> Result<Self, Self::Error> {
        Box3D::new(r.cx, r.cy, r.cz, r.w, r.l, r.h, r.yaw)
    }
}

impl Box3D {
    /// Validates the box and wraps its yaw into `[-pi, pi)`.
    pub fn new(
        cx: f64,
        cy: f64,
        cz: f64,
        w: f64,
        l: f64,
        h: f64,
        yaw: f64,
    ) -> Result<Self, GeometryError> {
        for (name, v) in [("cx", cx), ("cy", cy), ("cz", cz), ("yaw", yaw)] {
            if !v.is_finite() {
                return Err(GeometryError::NonFinite(name));
            }
        }
        if !(w.is_finite() && l.is_finite() && h.is_finite() && w > 0.0 && l > 0.0 && h > 0.0) {
            return Err(GeometryError::NonPositiveSize { w, l, h });
        }
        Ok(Self {
            cx,
            cy,
            cz,
            w,
            l,
            h,
            yaw: normalize_yaw(yaw),
        })
    }

    pub fn center(&self) -> [f64; 2] {
        [self.cx, self.cy]
    }

    pub fn bottom(&self) -> f64 {
        self.cz - 0.5 * self.h
    }

    pub fn top(&self) -> f64 {
        self.cz + 0.5 * self.h
    }

    pub fn volume(&self) -> f64 {
        self.w * self.l * self.h
    }

    /// Unit vector along the box length.
    pub fn heading(&self) -> [f64; 2] {
        let (s, c) = self.yaw.sin_cos();
        [c, s]
    }

    /// True if the BEV point lies inside (or on) the footprint.
    pub fn contains_bev(&self, x: f64, y: f64) -> bool {
        let [c, s] = self.heading();
        let dx = x - self.cx;
        let dy = y - self.cy;
        let along = dx * c + dy * s;
        let across = -dx * s + dy * c;
        along.abs() <= 0.5 * self.l && across.abs() <= 0.5 * self.w
    }

    /// Applies a planar rigid motion (rotation about the origin by `theta`,
    /// then translation by `t`) to the footprint.
    pub fn transformed(&self, theta: f64, t: [f64; 2]) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            cx: c * self.cx - s * self.cy + t[0],
            cy: s * self.cx + c * self.cy + t[1],
            yaw: normalize_yaw(self.yaw + theta),
            ..*self
        }
    }

    fn sort_key(&self) -> [f64; 7] {
        [self.cx, self.cy, self.cz, self.w, self.l, self.h, self.yaw]
    }
}

fn cmp_boxes(a: &Box3D, b: &Box3D) -> Ordering {
    a.sort_key()
        .iter()
        .zip(b.sort_key().iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Counter-clockwise convex polygon in the BEV plane.
#[derive(Debug, Clone, PartialEq)]
pub struct BevPolygon {
    pub vertices: Vec<[f64; 2]>,
}

impl BevPolygon {
    /// Shoelace area (positive for CCW order).
    pub fn signed_area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }
}

pub fn shoelace(pts: &[[f64; 2]]) -> f64 {
    let n = pts.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, y0] = pts[i];
        let [x1, y1] = pts[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc
}

pub fn box_to_bev_polygon(b: &Box3D) -> BevPolygon {
    let [c, s] = b.heading();
    let hl = 0.5 * b.l;
    let hw = 0.5 * b.w;
    let corner = |a: f64, w: f64| [b.cx + a * c - w * s, b.cy + a * s + w * c];
    BevPolygon {
        vertices: vec![
            corner(hl, hw),
            corner(-hl, hw),
            corner(-hl, -hw),
            corner(hl, -hw),
        ],
    }
}

fn cross(o: [f64; 2], a: [f64; 2], p: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0])
}

fn line_intersection(p: [f64; 2], q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    // Point on segment p->q crossing the infinite line a->b.
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let t = dp / (dp - dq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Sutherland-Hodgman clipping of `subject` against the convex CCW `clip`.
/// Points on a clip edge count as inside.
pub fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output: Vec<[f64; 2]> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let input = std::mem::take(&mut output);
        let m = input.len();
        for k in 0..m {
            let cur = input[k];
            let prev = input[(k + m - 1) % m];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

/// Footprint intersection area. Argument order does not affect the result.
pub fn bev_intersection_area(a: &Box3D, b: &Box3D) -> f64 {
    let (a, b) = if cmp_boxes(a, b) == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    };
    let dx = a.cx - b.cx;
    let dy = a.cy - b.cy;
    let reach = 0.5 * (a.w.hypot(a.l) + b.w.hypot(b.l));
    if dx * dx + dy * dy > reach * reach {
        return 0.0;
    }
    let pa = box_to_bev_polygon(a);
    let pb = box_to_bev_polygon(b);
    let area = shoelace(&clip_convex(&pa.vertices, &pb.vertices)).abs();
    if area <= AREA_EPS {
        0.0
    } else {
        area
    }
}

pub fn bev_iou(a: &Box3D, b: &Box3D) -> f64 {
    let inter = bev_intersection_area(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.w * a.l + b.w * b.l - inter;
    (inter / union).clamp(0.0, 1.0)
}

pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    let overlap_z = (a.top().min(b.top()) - a.bottom().max(b.bottom())).max(0.0);
    if overlap_z == 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * overlap_z;
    if inter == 0.0 {
        return 0.0;
    }
    (inter / (a.volume() + b.volume() - inter)).clamp(0.0, 1.0)
}

pub fn center_distance_bev(a: &Box3D, b: &Box3D) -> f64 {
    (a.cx - b.cx).hypot(a.cy - b.cy)
}

/// Anything that can take part in rotated NMS.
pub trait NmsItem {
    fn nms_box(&self) -> &Box3D;
    fn nms_score(&self) -> f64;
    fn nms_class(&self) -> usize {
        0
    }
}

impl NmsItem for (Box3D, f64) {
    fn nms_box(&self) -> &Box3D {
        &self.0
    }
    fn nms_score(&self) -> f64 {
        self.1
    }
}

impl NmsItem for (Box3D, f64, usize) {
    fn nms_box(&self) -> &Box3D {
        &self.0
    }
    fn nms_score(&self) -> f64 {
        self.1
    }
    fn nms_class(&self) -> usize {
        self.2
    }
}

/// Greedy class-wise NMS. Output is in descending score order; equal scores
/// keep their input order.
pub fn rotated_nms<T: NmsItem>(mut items: Vec<T>, iou_threshold: f64) -> Vec<T> {
    items.sort_by(|a, b| b.nms_score().total_cmp(&a.nms_score()));
    let mut kept: Vec<T> = Vec::with_capacity(items.len());
    for item in items {
        let suppressed = kept.iter().any(|k| {
            k.nms_class() == item.nms_class()
                && bev_iou(k.nms_box(), item.nms_box()) >= iou_threshold
        });
        if !suppressed {
            kept.push(item);
        }
    }
    kept
}
