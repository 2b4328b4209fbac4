use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Axis-aligned box in continuous image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoundingBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        if !(x0 < x1 && y0 < y1) || !(x0.is_finite() && y0.is_finite() && x1.is_finite() && y1.is_finite()) {
            return Err(GeometryError::InvalidBox { x0, y0, x1, y1 });
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    /// Converts a center/size box to corner form.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self {
            x0: cx - w / 2.0,
            y0: cy - h / 2.0,
            x1: cx + w / 2.0,
            y1: cy + h / 2.0,
        }
    }

    pub fn width(&self) -> f64 {
        (self.x1 - self.x0).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y1 - self.y0).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &Self) -> f64 {
        let w = self.x1.min(other.x1) - self.x0.max(other.x0);
        let h = self.y1.min(other.y1) - self.y0.max(other.y0);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn dilate(&self, by: f64) -> Self {
        Self {
            x0: self.x0 - by,
            y0: self.y0 - by,
            x1: self.x1 + by,
            y1: self.y1 + by,
        }
    }

    pub fn clamp(&self, width: f64, height: f64) -> Self {
        Self {
            x0: self.x0.clamp(0.0, width),
            y0: self.y0.clamp(0.0, height),
            x1: self.x1.clamp(0.0, width),
            y1: self.y1.clamp(0.0, height),
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            x1: self.x1 + dx,
            y1: self.y1 + dy,
        }
    }

    /// Pixels whose centers fall inside the box, clipped to a `width x height` canvas.
    pub fn pixel_rect(&self, width: usize, height: usize) -> Option<PixelRect> {
        let x0 = ((self.x0 - 0.5).ceil().max(0.0)) as usize;
        let y0 = ((self.y0 - 0.5).ceil().max(0.0)) as usize;
        let x1 = ((self.x1 - 0.5).ceil().max(0.0) as usize).min(width);
        let y1 = ((self.y1 - 0.5).ceil().max(0.0) as usize).min(height);
        (x0 < x1 && y0 < y1).then(|| PixelRect { x: x0, y: y0, width: x1 - x0, height: y1 - y0 })
    }
}

/// Intersection-over-union of two rectangles. Zero when the union is empty.
pub fn box_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Integer pixel window `[x, x+width) x [y, y+height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub const fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self { x, y, width, height }
    }

    pub fn x_end(&self) -> usize {
        self.x + self.width
    }

    pub fn y_end(&self) -> usize {
        self.y + self.height
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x_end() && y >= self.y && y < self.y_end()
    }

    pub fn intersect(&self, other: &Self) -> Option<Self> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.x_end().min(other.x_end());
        let y1 = self.y_end().min(other.y_end());
        (x0 < x1 && y0 < y1).then(|| Self::new(x0, y0, x1 - x0, y1 - y0))
    }

    pub fn union(&self, other: &Self) -> Self {
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        let x1 = self.x_end().max(other.x_end());
        let y1 = self.y_end().max(other.y_end());
        Self::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn to_box(&self) -> BoundingBox {
        BoundingBox {
            x0: self.x as f64,
            y0: self.y as f64,
            x1: self.x_end() as f64,
            y1: self.y_end() as f64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn identical_boxes() {
        let a = bb(3.0, 4.0, 10.0, 12.5);
        assert_eq!(box_iou(&a, &a), 1.0);
    }

    #[test]
    fn diagonal_overlap_is_one_seventh() {
        assert!((box_iou(&bb(0.0, 0.0, 2.0, 2.0), &bb(1.0, 1.0, 3.0, 3.0)) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn half_shift_is_one_third() {
        assert!((box_iou(&bb(0.0, 0.0, 2.0, 2.0), &bb(0.0, 1.0, 2.0, 3.0)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_box_rejected() {
        assert!(BoundingBox::new(1.0, 0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn center_to_corner() {
        let b = BoundingBox::from_center(100.0, 100.0, 50.0, 20.0);
        assert_eq!((b.x0, b.y0, b.x1, b.y1), (75.0, 90.0, 125.0, 110.0));
    }

    #[test]
    fn pixel_rect_uses_centers() {
        let b = bb(0.4, 0.6, 3.5, 2.0);
        assert_eq!(b.pixel_rect(10, 10), Some(PixelRect::new(0, 1, 3, 1)));
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(
            a in (0.0f64..50.0, 0.0f64..50.0, 0.1f64..40.0, 0.1f64..40.0),
            b in (0.0f64..50.0, 0.0f64..50.0, 0.1f64..40.0, 0.1f64..40.0),
        ) {
            let a = bb(a.0, a.1, a.0 + a.2, a.1 + a.3);
            let b = bb(b.0, b.1, b.0 + b.2, b.1 + b.3);
            let ab = box_iou(&a, &b);
            prop_assert_eq!(ab, box_iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            if a != b {
                prop_assert!(ab < 1.0);
            }
        }
    }
}
