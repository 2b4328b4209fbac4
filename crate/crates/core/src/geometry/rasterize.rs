use super::polygon::crossing_x;
use super::{BinaryMask, GeometryError, PixelRect, PlacedMask, Polygon};

/// Fills every pixel whose center lies inside `polygon` (even-odd rule).
/// Parts of the polygon outside the canvas are clipped.
pub fn rasterize(polygon: &Polygon, width: usize, height: usize) -> Result<BinaryMask, GeometryError> {
    let mut mask = BinaryMask::new(width, height)?;
    if polygon.area() == 0.0 {
        return Err(GeometryError::Empty("polygon has zero area"));
    }
    scan(polygon, PixelRect::new(0, 0, width, height), |x, y| mask.set(x, y, true));
    Ok(mask)
}

/// Rasterizes `polygon` into a window around its bounds inside a
/// `width x height` frame. Returns `None` when no pixel center is covered.
pub fn rasterize_placed(polygon: &Polygon, width: usize, height: usize) -> Option<PlacedMask> {
    let b = polygon.bounds();
    let window = b.pixel_rect(width, height)?;
    let mut mask = BinaryMask::new(window.width, window.height).ok()?;
    scan(polygon, window, |x, y| mask.set(x - window.x, y - window.y, true));
    PlacedMask::new(window.x, window.y, mask).trimmed()
}

fn scan(polygon: &Polygon, window: PixelRect, mut fill: impl FnMut(usize, usize)) {
    let mut crossings: Vec<f64> = Vec::new();
    for j in window.y..window.y_end() {
        let cy = j as f64 + 0.5;
        crossings.clear();
        for (a, b) in polygon.edges() {
            if (a.y > cy) != (b.y > cy) {
                crossings.push(crossing_x(a, b, cy));
            }
        }
        if crossings.is_empty() {
            continue;
        }
        crossings.sort_by(f64::total_cmp);
        // A center at cx is inside iff an odd number of crossings lie to its
        // right, i.e. c[2k] <= cx < c[2k+1].
        for pair in crossings.chunks_exact(2) {
            let start = (pair[0] - 0.5).ceil().max(window.x as f64);
            let end = (pair[1] - 0.5).ceil().min(window.x_end() as f64);
            let (start, end) = (start as i64, end as i64);
            for i in start..end {
                fill(i as usize, j);
            }
        }
    }
}
