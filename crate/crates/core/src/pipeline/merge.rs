use std::cmp::Ordering;
use std::collections::HashMap;

use crate::geometry::PixelRect;
use crate::inference::Detection;

const BUCKET: usize = 256;

/// Coarse grid of rectangles for overlap queries.
#[derive(Debug, Default)]
pub(crate) struct BucketIndex {
    cells: HashMap<(usize, usize), Vec<usize>>,
}

impl BucketIndex {
    fn cells_of(rect: &PixelRect) -> impl Iterator<Item = (usize, usize)> {
        let (x0, x1) = (rect.x / BUCKET, (rect.x_end().max(1) - 1) / BUCKET);
        let (y0, y1) = (rect.y / BUCKET, (rect.y_end().max(1) - 1) / BUCKET);
        (y0..=y1).flat_map(move |y| (x0..=x1).map(move |x| (x, y)))
    }

    pub(crate) fn insert(&mut self, id: usize, rect: &PixelRect) {
        for c in Self::cells_of(rect) {
            self.cells.entry(c).or_default().push(id);
        }
    }

    /// Ids whose rectangles may intersect `rect`, ascending and unique.
    pub(crate) fn query(&self, rect: &PixelRect) -> Vec<usize> {
        let mut out: Vec<usize> = Self::cells_of(rect)
            .filter_map(|c| self.cells.get(&c))
            .flatten()
            .copied()
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Processing order for greedy suppression: confidence desc, mask area
/// desc, box x0 asc, box y0 asc, then input position.
pub fn rank(detections: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| rank_cmp(&detections[a], &detections[b]).then(a.cmp(&b)));
    order
}

fn rank_cmp(a: &Detection, b: &Detection) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(b.area().cmp(&a.area()))
        .then(a.bbox.x0.total_cmp(&b.bbox.x0))
        .then(a.bbox.y0.total_cmp(&b.bbox.y0))
}

/// Outcome of greedy suppression over input indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Suppression {
    /// Survivors in rank order.
    pub kept: Vec<usize>,
    /// For each input, the survivor that absorbed it (itself when kept).
    pub owner: Vec<usize>,
}

/// Greedy mask suppression. A detection is dropped when its mask IoU with an
/// already kept detection of the same class exceeds `iou_threshold`; it is
/// assigned to the highest-ranked such survivor.
pub fn suppress(detections: &[Detection], iou_threshold: f64) -> Suppression {
    let mut owner = vec![usize::MAX; detections.len()];
    let mut kept: Vec<usize> = Vec::new();
    let mut index = BucketIndex::default();
    for i in rank(detections) {
        let d = &detections[i];
        let rect = d.mask.rect();
        let mut absorbed = None;
        let mut best_rank = usize::MAX;
        for k in index.query(&rect) {
            let kd = &detections[kept[k]];
            if kd.class == d.class && k < best_rank && kd.mask.iou(&d.mask) > iou_threshold {
                best_rank = k;
                absorbed = Some(kept[k]);
            }
        }
        match absorbed {
            Some(o) => owner[i] = o,
            None => {
                owner[i] = i;
                index.insert(kept.len(), &rect);
                kept.push(i);
            }
        }
    }
    Suppression { kept, owner }
}

/// Greedy deduplication by mask IoU; survivors in rank order.
pub fn dedup(detections: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    suppress(detections, iou_threshold)
        .kept
        .into_iter()
        .map(|i| detections[i].clone())
        .collect()
}

/// True when any mask pixel lies within `margin` pixels of an image edge.
pub fn touches_border(d: &Detection, image_size: (usize, usize), margin: usize) -> bool {
    let (w, h) = image_size;
    let Some(b) = d.mask.foreground_bounds() else {
        return false;
    };
    let gap = b
        .x
        .min(b.y)
        .min(w.saturating_sub(b.x_end()))
        .min(h.saturating_sub(b.y_end()));
    gap <= margin
}

/// Drops detections that touch the image border. Returns the kept
/// detections (order preserved) and the number excluded.
pub fn exclude_border(detections: Vec<Detection>, image_size: (usize, usize), margin: usize) -> (Vec<Detection>, usize) {
    let before = detections.len();
    let kept: Vec<Detection> = detections
        .into_iter()
        .filter(|d| !touches_border(d, image_size, margin))
        .collect();
    let excluded = before - kept.len();
    (kept, excluded)
}
