//! Tiled processing of images too large for one forward pass.
//!
//! Tiles are read and detected in parallel; merging runs once all tiles are
//! done and does not depend on completion order.

mod merge;
pub mod synthetic;
mod tiles;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::PixelRect;
use crate::inference::{Detection, InferenceError, TileDetector};
use crate::raster::{RasterError, RasterSource};

pub use merge::{dedup, exclude_border, rank, suppress, touches_border, Suppression};
pub use tiles::{axis_origins, plan_tiles, TileGrid};

pub const DEFAULT_TILE_SIZE: usize = 1024;
pub const DEFAULT_OVERLAP: usize = 256;
pub const DEFAULT_DEDUP_IOU: f64 = 0.5;

/// Objects whose box extent reaches this fraction of the overlap risk being
/// cut in every tile.
pub const OVERLAP_WARNING_FRACTION: f64 = 0.8;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid tile plan: {0}")]
    InvalidPlan(String),
    #[error("tile grid is for {grid:?} but the image is {image:?}")]
    GridMismatch { grid: (usize, usize), image: (usize, usize) },
    #[error("reading tile {tile} at {window:?}: {source}")]
    Raster {
        tile: usize,
        window: PixelRect,
        #[source]
        source: RasterError,
    },
    #[error("inference on tile {tile} at {window:?}: {source}")]
    Inference {
        tile: usize,
        window: PixelRect,
        #[source]
        source: InferenceError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeParams {
    pub dedup_iou: f64,
    pub border_margin: usize,
}

impl Default for MergeParams {
    fn default() -> Self {
        Self {
            dedup_iou: DEFAULT_DEDUP_IOU,
            border_margin: 0,
        }
    }
}

/// Detections of a whole image after merging and border exclusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedDetectionSet {
    pub image_size: (usize, usize),
    /// Global coordinates, ordered by confidence desc, area desc, x0, y0.
    pub detections: Vec<Detection>,
    /// Ascending ids of the tiles that contributed to each detection.
    pub provenance: Vec<Vec<usize>>,
    pub duplicates_removed: usize,
    pub border_excluded: usize,
    pub tiles: usize,
    /// Tile-cut pieces that were stitched into a single object.
    pub stitched: usize,
}

impl MergedDetectionSet {
    /// Largest bounding-box side among the detections, in pixels.
    pub fn max_extent(&self) -> f64 {
        self.detections
            .iter()
            .map(|d| d.bbox.width().max(d.bbox.height()))
            .fold(0.0, f64::max)
    }

    /// Message when objects are large enough for the overlap to be too small.
    pub fn overlap_warning(&self, overlap: usize) -> Option<String> {
        let extent = self.max_extent();
        (extent >= OVERLAP_WARNING_FRACTION * overlap as f64).then(|| {
            format!(
                "largest object spans {extent:.0} px, close to the {overlap} px tile overlap; \
                 consider a larger --overlap"
            )
        })
    }
}

struct TileHit {
    tile: usize,
    window: PixelRect,
    detection: Detection,
    cut: bool,
}

/// True when the (tile-local) mask reaches a tile edge that is not an edge of
/// the image.
fn is_cut(d: &Detection, window: &PixelRect, image_size: (usize, usize)) -> bool {
    let Some(b) = d.mask.foreground_bounds() else {
        return false;
    };
    (window.x > 0 && b.x == 0)
        || (window.y > 0 && b.y == 0)
        || (window.x_end() < image_size.0 && b.x_end() >= window.width)
        || (window.y_end() < image_size.1 && b.y_end() >= window.height)
}

fn detect_tiles(
    detector: &dyn TileDetector,
    source: &dyn RasterSource,
    grid: &TileGrid,
) -> Result<Vec<TileHit>, PipelineError> {
    let per_tile: Vec<Result<Vec<TileHit>, PipelineError>> = (0..grid.len())
        .into_par_iter()
        .map(|tile| {
            let window = grid.tile(tile);
            let pixels = source
                .read_window(window)
                .map_err(|source| PipelineError::Raster { tile, window, source })?;
            let found = detector
                .detect(&pixels, window)
                .map_err(|source| PipelineError::Inference { tile, window, source })?;
            Ok(found
                .into_iter()
                .map(|d| TileHit {
                    tile,
                    window,
                    cut: is_cut(&d, &window, grid.image_size),
                    detection: d.translate(window.x, window.y),
                })
                .collect())
        })
        .collect();
    let mut hits = Vec::new();
    for r in per_tile {
        hits.extend(r?);
    }
    Ok(hits)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Runs `detector` over every tile of `grid` and merges the results.
///
/// Whole detections are deduplicated by mask IoU. A tile-cut piece is
/// discarded when at least half of it lies inside a kept whole detection of
/// the same class; remaining pieces from different tiles are stitched when
/// their masks agree (IoU above the dedup threshold) inside the shared part
/// of their tiles. Objects touching the image border are removed last.
pub fn run_tiled(
    detector: &dyn TileDetector,
    source: &dyn RasterSource,
    grid: &TileGrid,
    params: &MergeParams,
) -> Result<MergedDetectionSet, PipelineError> {
    if grid.image_size != source.dimensions() {
        return Err(PipelineError::GridMismatch {
            grid: grid.image_size,
            image: source.dimensions(),
        });
    }
    let hits = detect_tiles(detector, source, grid)?;
    let raw_count = hits.len();
    let (whole, cut): (Vec<TileHit>, Vec<TileHit>) = hits.into_iter().partition(|h| !h.cut);

    // Whole detections.
    let whole_dets: Vec<Detection> = whole.iter().map(|h| h.detection.clone()).collect();
    let s = suppress(&whole_dets, params.dedup_iou);
    let mut slot = vec![usize::MAX; whole.len()];
    let mut merged: Vec<(Detection, Vec<usize>)> = Vec::with_capacity(s.kept.len());
    for &k in &s.kept {
        slot[k] = merged.len();
        merged.push((whole_dets[k].clone(), Vec::new()));
    }
    for (i, &o) in s.owner.iter().enumerate() {
        merged[slot[o]].1.push(whole[i].tile);
    }

    // Pieces already represented by a whole detection.
    let mut index = merge::BucketIndex::default();
    for (i, (d, _)) in merged.iter().enumerate() {
        index.insert(i, &d.mask.rect());
    }
    let mut loose = Vec::new();
    for h in &cut {
        let piece = &h.detection;
        let owner = index.query(&piece.mask.rect()).into_iter().find(|&k| {
            let d = &merged[k].0;
            d.class == piece.class && 2 * d.mask.intersection_count(&piece.mask) >= piece.area()
        });
        match owner {
            Some(k) => merged[k].1.push(h.tile),
            None => loose.push(h),
        }
    }

    // Stitch the remaining pieces.
    let mut uf = UnionFind((0..loose.len()).collect());
    let mut piece_index = merge::BucketIndex::default();
    for (i, h) in loose.iter().enumerate() {
        let rect = h.detection.mask.rect();
        for j in piece_index.query(&rect) {
            let o = loose[j];
            if o.tile == h.tile || o.detection.class != h.detection.class {
                continue;
            }
            let Some(shared) = o.window.intersect(&h.window) else {
                continue;
            };
            if o.detection.mask.iou_within(&h.detection.mask, &shared) > params.dedup_iou {
                uf.union(i, j);
            }
        }
        piece_index.insert(i, &rect);
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of = vec![usize::MAX; loose.len()];
    for i in 0..loose.len() {
        let r = uf.find(i);
        if group_of[r] == usize::MAX {
            group_of[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[group_of[r]].push(i);
    }
    let mut stitched = 0;
    for g in groups {
        let first = &loose[g[0]].detection;
        let mut mask = first.mask.clone();
        let mut confidence = first.confidence;
        for &i in &g[1..] {
            mask = mask.union(&loose[i].detection.mask);
            confidence = confidence.max(loose[i].detection.confidence);
        }
        if g.len() > 1 {
            stitched += g.len();
        }
        let tiles = g.iter().map(|&i| loose[i].tile).collect();
        if let Some(d) = Detection::from_mask(first.class, confidence, None, mask) {
            merged.push((d, tiles));
        }
    }

    // Final pass over whole and stitched objects together.
    let dets: Vec<Detection> = merged.iter().map(|(d, _)| d.clone()).collect();
    let s = suppress(&dets, params.dedup_iou);
    let mut provenance: Vec<Vec<usize>> = vec![Vec::new(); dets.len()];
    for (i, &o) in s.owner.iter().enumerate() {
        let tiles = merged[i].1.clone();
        provenance[o].extend(tiles);
    }
    let before_border = s.kept.len();
    let mut detections = Vec::new();
    let mut prov = Vec::new();
    for &k in &s.kept {
        if !touches_border(&dets[k], grid.image_size, params.border_margin) {
            let mut p = std::mem::take(&mut provenance[k]);
            p.sort_unstable();
            p.dedup();
            detections.push(dets[k].clone());
            prov.push(p);
        }
    }
    Ok(MergedDetectionSet {
        image_size: grid.image_size,
        border_excluded: before_border - detections.len(),
        duplicates_removed: raw_count - before_border,
        detections,
        provenance: prov,
        tiles: grid.len(),
        stitched,
    })
}
