//! Center-distance average precision and CLEAR-MOT tracking metrics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::decode::Detection;
use crate::targets::AnnotatedObject;

/// Default AP distance thresholds, meters.
pub const AP_THRESHOLDS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
pub const DEFAULT_MOT_THRESHOLD: f64 = 2.0;
/// Per-frame assignments up to this size are solved exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 8;

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// One point of a precision-recall curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub score: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApResult {
    pub ap: f64,
    pub num_gt: usize,
    pub curve: Vec<PrPoint>,
}

/// Average precision of one class at one center-distance threshold.
///
/// Detections are matched in descending score over all frames; each takes
/// the closest unmatched ground truth of its class in its frame that lies
/// strictly closer than `dist_threshold`. AP integrates the precision
/// envelope over recall. Returns `None` when the class has no ground truth.
pub fn detection_ap(
    dets: &[Vec<Detection>],
    gts: &[Vec<AnnotatedObject>],
    class_id: usize,
    dist_threshold: f64,
) -> Option<ApResult> {
    let num_gt = gts.iter().flatten().filter(|g| g.class_id == class_id).count();
    if num_gt == 0 {
        return None;
    }
    let mut ranked: Vec<(usize, &Detection)> = dets
        .iter()
        .enumerate()
        .flat_map(|(f, ds)| ds.iter().map(move |d| (f, d)))
        .filter(|(_, d)| d.class_id == class_id)
        .collect();
    ranked.sort_by(|a, b| b.1.score.total_cmp(&a.1.score));

    let mut taken: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(ranked.len());
    let mut hits = Vec::with_capacity(ranked.len());
    for (k, (frame, det)) in ranked.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        if let Some(frame_gts) = gts.get(*frame) {
            for (j, g) in frame_gts.iter().enumerate() {
                if g.class_id != class_id || taken[*frame][j] {
                    continue;
                }
                let d = dist(det.bbox.center(), g.bbox.center());
                if d < dist_threshold && best.is_none_or(|(_, b)| d < b) {
                    best = Some((j, d));
                }
            }
        }
        let hit = best.is_some();
        if let Some((j, _)) = best {
            taken[*frame][j] = true;
            tp += 1;
        }
        hits.push(hit);
        curve.push(PrPoint {
            score: det.score,
            recall: tp as f64 / num_gt as f64,
            precision: tp as f64 / (k + 1) as f64,
        });
    }

    // Precision envelope: best precision at this rank or any later one.
    let mut envelope = vec![0.0; curve.len()];
    let mut running = 0.0f64;
    for k in (0..curve.len()).rev() {
        running = running.max(curve[k].precision);
        envelope[k] = running;
    }
    // Each true positive adds one recall step of width 1 / num_gt.
    let ap = hits
        .iter()
        .zip(&envelope)
        .filter(|(h, _)| **h)
        .map(|(_, p)| p)
        .sum::<f64>()
        / num_gt as f64;
    Some(ApResult { ap, num_gt, curve })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class_id: usize,
    /// `(threshold, AP)` pairs; `None` when the class has no ground truth.
    pub ap: Vec<(f64, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEvalResult {
    pub per_class: Vec<ClassAp>,
    /// Mean over every defined (class, threshold) AP.
    pub map: Option<f64>,
    /// PR curve per class at each threshold, same order as `per_class`.
    pub curves: Vec<Vec<(f64, Vec<PrPoint>)>>,
}

pub fn evaluate_detections(
    dets: &[Vec<Detection>],
    gts: &[Vec<AnnotatedObject>],
    num_classes: usize,
    thresholds: &[f64],
) -> DetectionEvalResult {
    let mut per_class = Vec::with_capacity(num_classes);
    let mut curves = Vec::with_capacity(num_classes);
    let mut defined = Vec::new();
    for class_id in 0..num_classes {
        let mut aps = Vec::with_capacity(thresholds.len());
        let mut class_curves = Vec::new();
        for &t in thresholds {
            match detection_ap(dets, gts, class_id, t) {
                Some(r) => {
                    defined.push(r.ap);
                    aps.push((t, Some(r.ap)));
                    class_curves.push((t, r.curve));
                }
                None => aps.push((t, None)),
            }
        }
        per_class.push(ClassAp { class_id, ap: aps });
        curves.push(class_curves);
    }
    let map = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    DetectionEvalResult {
        per_class,
        map,
        curves,
    }
}

/// A tracker output or ground-truth instance as seen by CLEAR-MOT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotObject {
    pub id: u64,
    pub class_id: usize,
    pub center: [f64; 2],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotCounts {
    pub num_gt: usize,
    pub matches: usize,
    pub fp: usize,
    pub fn_: usize,
    pub ids: usize,
}

impl MotCounts {
    fn add(&mut self, o: &MotCounts) {
        self.num_gt += o.num_gt;
        self.matches += o.matches;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.ids += o.ids;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotClassResult {
    pub class_id: usize,
    pub counts: MotCounts,
    pub mota: Option<f64>,
    pub motp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotResult {
    /// `1 - (FP + FN + IDS) / GT`; undefined without ground truth.
    pub mota: Option<f64>,
    /// Mean matched center distance, meters; undefined without matches.
    pub motp: Option<f64>,
    pub counts: MotCounts,
    pub per_class: Vec<MotClassResult>,
}

fn mota_of(c: &MotCounts) -> Option<f64> {
    (c.num_gt > 0).then(|| 1.0 - (c.fp + c.fn_ + c.ids) as f64 / c.num_gt as f64)
}

/// Maximum-cardinality, then minimum-total-distance assignment between
/// `rows` and `cols` restricted to pairs with `cost <= threshold`.
/// `cost[i][j]` is row-major. Returns `(row, col)` pairs sorted by row.
pub fn optimal_assignment(cost: &[f64], rows: usize, cols: usize, threshold: f64) -> Vec<(usize, usize)> {
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows.max(cols) <= EXHAUSTIVE_LIMIT {
        exhaustive_assignment(cost, rows, cols, threshold)
    } else {
        hungarian_assignment(cost, rows, cols, threshold)
    }
}

/// Enumerates every partial matching. Ties keep the first one found.
pub fn exhaustive_assignment(cost: &[f64], rows: usize, cols: usize, threshold: f64) -> Vec<(usize, usize)> {
    struct Search<'a> {
        cost: &'a [f64],
        cols: usize,
        threshold: f64,
        used: Vec<bool>,
        current: Vec<(usize, usize)>,
        best: Vec<(usize, usize)>,
        best_key: (usize, f64),
    }
    impl Search<'_> {
        fn go(&mut self, row: usize, rows: usize, total: f64) {
            if row == rows {
                let key = (self.current.len(), total);
                if key.0 > self.best_key.0 || (key.0 == self.best_key.0 && key.1 < self.best_key.1) {
                    self.best_key = key;
                    self.best = self.current.clone();
                }
                return;
            }
            for j in 0..self.cols {
                let c = self.cost[row * self.cols + j];
                if !self.used[j] && c <= self.threshold {
                    self.used[j] = true;
                    self.current.push((row, j));
                    self.go(row + 1, rows, total + c);
                    self.current.pop();
                    self.used[j] = false;
                }
            }
            self.go(row + 1, rows, total);
        }
    }
    let mut s = Search {
        cost,
        cols,
        threshold,
        used: vec![false; cols],
        current: Vec::new(),
        best: Vec::new(),
        best_key: (0, f64::INFINITY),
    };
    s.go(0, rows, 0.0);
    s.best
}

/// Hungarian algorithm on a square matrix padded with a penalty larger than
/// any total of admissible costs, so cardinality is maximized first.
pub fn hungarian_assignment(cost: &[f64], rows: usize, cols: usize, threshold: f64) -> Vec<(usize, usize)> {
    let n = rows.max(cols);
    let admissible_max = cost
        .iter()
        .filter(|c| **c <= threshold)
        .fold(0.0f64, |m, c| m.max(*c));
    let penalty = (n as f64 + 1.0) * (admissible_max + 1.0);
    let at = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            let c = cost[i * cols + j];
            if c <= threshold {
                return c;
            }
        }
        penalty
    };

    // 1-indexed potentials formulation.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out: Vec<(usize, usize)> = (1..=n)
        .filter_map(|j| {
            let (i, j) = (p[j] - 1, j - 1);
            (i < rows && j < cols && cost[i * cols + j] <= threshold).then_some((i, j))
        })
        .collect();
    out.sort_unstable();
    out
}

fn clear_mot_class(
    preds: &[Vec<MotObject>],
    gts: &[Vec<MotObject>],
    class_id: usize,
    threshold: f64,
) -> (MotCounts, f64) {
    let mut counts = MotCounts::default();
    let mut total_dist = 0.0;
    let mut previous: HashMap<u64, u64> = HashMap::new();
    let mut last_seen: HashMap<u64, u64> = HashMap::new();
    let empty = Vec::new();
    for t in 0..preds.len().max(gts.len()) {
        let p: Vec<&MotObject> = preds.get(t).unwrap_or(&empty).iter().filter(|o| o.class_id == class_id).collect();
        let g: Vec<&MotObject> = gts.get(t).unwrap_or(&empty).iter().filter(|o| o.class_id == class_id).collect();
        let mut p_used = vec![false; p.len()];
        let mut g_used = vec![false; g.len()];
        let mut current: HashMap<u64, u64> = HashMap::new();

        // Keep last frame's correspondences that are still close enough.
        for (gi, go) in g.iter().enumerate() {
            let Some(&pid) = previous.get(&go.id) else { continue };
            if let Some(pi) = p.iter().position(|po| po.id == pid) {
                let d = dist(go.center, p[pi].center);
                if !p_used[pi] && d <= threshold {
                    p_used[pi] = true;
                    g_used[gi] = true;
                    current.insert(go.id, pid);
                    total_dist += d;
                }
            }
        }

        let g_free: Vec<usize> = (0..g.len()).filter(|i| !g_used[*i]).collect();
        let p_free: Vec<usize> = (0..p.len()).filter(|i| !p_used[*i]).collect();
        let mut cost = Vec::with_capacity(g_free.len() * p_free.len());
        for &gi in &g_free {
            for &pi in &p_free {
                cost.push(dist(g[gi].center, p[pi].center));
            }
        }
        for (a, b) in optimal_assignment(&cost, g_free.len(), p_free.len(), threshold) {
            let (go, po) = (g[g_free[a]], p[p_free[b]]);
            if last_seen.get(&go.id).is_some_and(|prev| *prev != po.id) {
                counts.ids += 1;
            }
            current.insert(go.id, po.id);
            total_dist += cost[a * p_free.len() + b];
        }

        counts.num_gt += g.len();
        counts.matches += current.len();
        counts.fp += p.len() - current.len();
        counts.fn_ += g.len() - current.len();
        for (gid, pid) in &current {
            last_seen.insert(*gid, *pid);
        }
        previous = current;
    }
    (counts, total_dist)
}

/// CLEAR-MOT over aligned frame sequences, evaluated per class and summed.
pub fn clear_mot(preds: &[Vec<MotObject>], gts: &[Vec<MotObject>], threshold: f64) -> MotResult {
    let max_class = preds
        .iter()
        .chain(gts)
        .flatten()
        .map(|o| o.class_id + 1)
        .max()
        .unwrap_or(0);
    let mut total = MotCounts::default();
    let mut total_dist = 0.0;
    let mut per_class = Vec::new();
    for class_id in 0..max_class {
        let (c, d) = clear_mot_class(preds, gts, class_id, threshold);
        if c.num_gt == 0 && c.fp == 0 {
            continue;
        }
        total.add(&c);
        total_dist += d;
        per_class.push(MotClassResult {
            class_id,
            counts: c,
            mota: mota_of(&c),
            motp: (c.matches > 0).then(|| d / c.matches as f64),
        });
    }
    MotResult {
        mota: mota_of(&total),
        motp: (total.matches > 0).then(|| total_dist / total.matches as f64),
        counts: total,
        per_class,
    }
}

impl From<&AnnotatedObject> for MotObject {
    fn from(o: &AnnotatedObject) -> Self {
        Self {
            id: o.object_id,
            class_id: o.class_id,
            center: o.bbox.center(),
        }
    }
}

impl From<&crate::tracker::Track> for MotObject {
    fn from(t: &crate::tracker::Track) -> Self {
        Self {
            id: t.id,
            class_id: t.class_id,
            center: t.center(),
        }
    }
}
