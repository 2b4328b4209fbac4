//! Vector polygons, raster masks and the conversions between them.
//!
//! All modules share one frame: `x` grows rightward, `y` grows downward and
//! the origin is the top-left corner of the image. Pixel `(i, j)` covers the
//! unit square `[i, i+1) x [j, j+1)` and its center sits at `(i+0.5, j+0.5)`.

mod bbox;
mod contour;
mod mask;
mod polygon;
mod rasterize;

pub use bbox::{box_iou, BoundingBox, PixelRect};
pub use contour::{extract_contour, largest_component, label_components};
pub use mask::{mask_iou, BinaryMask, PlacedMask};
pub use polygon::{polygon_area, Point, Polygon};
pub use rasterize::{rasterize, rasterize_placed};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("empty geometry: {0}")]
    Empty(&'static str),
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("mask dimensions must be positive, got {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("mask dimension mismatch: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("invalid bounding box ({x0}, {y0}, {x1}, {y1})")]
    InvalidBox { x0: f64, y0: f64, x1: f64, y1: f64 },
    #[error("bit buffer holds {got} entries, expected {expected}")]
    BufferLength { expected: usize, got: usize },
}
