use serde::{Deserialize, Serialize};

use crate::geometry::PixelRect;

use super::PipelineError;

/// Overlapping tile layout over a `width x height` image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub image_size: (usize, usize),
    pub tile_size: usize,
    pub overlap: usize,
    /// Tile origins in row-major order (all x origins of the first row, then
    /// the next row).
    pub origins: Vec<(usize, usize)>,
}

/// Origins along one axis: steps of `tile - overlap`, the last clamped so the
/// tile ends at the image edge.
pub fn axis_origins(len: usize, tile: usize, overlap: usize) -> Vec<usize> {
    if len <= tile {
        return vec![0];
    }
    let step = tile - overlap;
    let last = len - tile;
    let mut out = Vec::new();
    let mut o = 0;
    loop {
        out.push(o.min(last));
        if o + tile >= len {
            break;
        }
        o += step;
    }
    out.dedup();
    out
}

pub fn plan_tiles(image_size: (usize, usize), tile_size: usize, overlap: usize) -> Result<TileGrid, PipelineError> {
    let (w, h) = image_size;
    if w == 0 || h == 0 {
        return Err(PipelineError::InvalidPlan(format!("image size {w}x{h} is empty")));
    }
    if tile_size == 0 || overlap >= tile_size {
        return Err(PipelineError::InvalidPlan(format!(
            "overlap {overlap} must be smaller than tile size {tile_size}"
        )));
    }
    let xs = axis_origins(w, tile_size, overlap);
    let ys = axis_origins(h, tile_size, overlap);
    let origins = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    Ok(TileGrid {
        image_size,
        tile_size,
        overlap,
        origins,
    })
}

impl TileGrid {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    /// Window of tile `i`, shrunk to the image when the image is smaller
    /// than one tile.
    pub fn tile(&self, i: usize) -> PixelRect {
        let (x, y) = self.origins[i];
        let (w, h) = self.image_size;
        PixelRect::new(x, y, self.tile_size.min(w - x), self.tile_size.min(h - y))
    }

    pub fn tiles(&self) -> impl Iterator<Item = PixelRect> + '_ {
        (0..self.len()).map(|i| self.tile(i))
    }

    /// Number of tiles containing pixel `(x, y)`.
    pub fn coverage(&self, x: usize, y: usize) -> usize {
        self.tiles().filter(|t| t.contains(x, y)).count()
    }

    /// True when the image is smaller than a tile on either axis.
    pub fn image_smaller_than_tile(&self) -> bool {
        self.image_size.0 < self.tile_size || self.image_size.1 < self.tile_size
    }
}
