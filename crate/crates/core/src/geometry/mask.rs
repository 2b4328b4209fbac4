use serde::{Deserialize, Serialize};

use super::{GeometryError, PixelRect};

/// Row-major boolean raster.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("count", &self.count())
            .finish()
    }
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidDimensions { width, height });
        }
        Ok(Self {
            width,
            height,
            bits: vec![false; width * height],
        })
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidDimensions { width, height });
        }
        if bits.len() != width * height {
            return Err(GeometryError::BufferLength {
                expected: width * height,
                got: bits.len(),
            });
        }
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> bool,
    ) -> Result<Self, GeometryError> {
        let mut m = Self::new(width, height)?;
        for y in 0..height {
            for x in 0..width {
                m.bits[y * width + x] = f(x, y);
            }
        }
        Ok(m)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.bits[y * self.width + x]
    }

    /// Like [`get`](Self::get) but accepts out-of-range signed coordinates.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        let w = self.width;
        self.bits[y * w + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Foreground pixel coordinates in raster order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Tight pixel bounds of the foreground.
    pub fn foreground_bounds(&self) -> Option<PixelRect> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for (x, y) in self.foreground() {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x + 1);
            y1 = y1.max(y + 1);
        }
        (x0 != usize::MAX).then(|| PixelRect::new(x0, y0, x1 - x0, y1 - y0))
    }

    /// Copies `rect` (clipped to the mask) into a new mask of the rect's size.
    pub fn crop(&self, rect: PixelRect) -> Result<Self, GeometryError> {
        let mut out = Self::new(rect.width, rect.height)?;
        for y in 0..rect.height {
            for x in 0..rect.width {
                if self.get(rect.x + x, rect.y + y) {
                    out.bits[y * rect.width + x] = true;
                }
            }
        }
        Ok(out)
    }

    pub fn intersection_count(&self, other: &Self) -> Result<usize, GeometryError> {
        self.check_dims(other)?;
        Ok(self.bits.iter().zip(&other.bits).filter(|(a, b)| **a && **b).count())
    }

    pub fn union_count(&self, other: &Self) -> Result<usize, GeometryError> {
        self.check_dims(other)?;
        Ok(self.bits.iter().zip(&other.bits).filter(|(a, b)| **a || **b).count())
    }

    /// Rotates a quarter turn clockwise on screen: pixel `(x, y)` of a
    /// `W x H` mask lands at `(H-1-y, x)` of the `H x W` result.
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let mut out = Self::new(h, w).expect("non-empty dims");
        for (x, y) in self.foreground() {
            out.set(h - 1 - y, x, true);
        }
        out
    }

    pub fn flip_horizontal(&self) -> Self {
        let w = self.width;
        let mut out = Self::new(w, self.height).expect("non-empty dims");
        for (x, y) in self.foreground() {
            out.set(w - 1 - x, y, true);
        }
        out
    }

    pub fn flip_vertical(&self) -> Self {
        let h = self.height;
        let mut out = Self::new(self.width, h).expect("non-empty dims");
        for (x, y) in self.foreground() {
            out.set(x, h - 1 - y, true);
        }
        out
    }

    fn check_dims(&self, other: &Self) -> Result<(), GeometryError> {
        if self.dims() != other.dims() {
            return Err(GeometryError::DimensionMismatch {
                a: self.dims(),
                b: other.dims(),
            });
        }
        Ok(())
    }
}

/// `|a ∩ b| / |a ∪ b|`, zero when both masks are empty.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, GeometryError> {
    let inter = a.intersection_count(b)?;
    let union = a.union_count(b)?;
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

/// A mask window positioned inside a larger frame. Detections on gigapixel
/// images keep only the window around their foreground.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PlacedMask {
    pub x: usize,
    pub y: usize,
    pub mask: BinaryMask,
}

impl PlacedMask {
    pub fn new(x: usize, y: usize, mask: BinaryMask) -> Self {
        Self { x, y, mask }
    }

    /// Window of `full` covering its foreground. `None` for an empty mask.
    pub fn from_full(full: &BinaryMask) -> Option<Self> {
        let r = full.foreground_bounds()?;
        Some(Self::new(r.x, r.y, full.crop(r).ok()?))
    }

    pub fn rect(&self) -> PixelRect {
        PixelRect::new(self.x, self.y, self.mask.width(), self.mask.height())
    }

    pub fn area(&self) -> usize {
        self.mask.count()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        x >= self.x && y >= self.y && self.mask.get(x - self.x, y - self.y)
    }

    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.mask.foreground().map(|(x, y)| (x + self.x, y + self.y))
    }

    /// Tight bounds of the foreground in frame coordinates.
    pub fn foreground_bounds(&self) -> Option<PixelRect> {
        self.mask
            .foreground_bounds()
            .map(|r| PixelRect::new(r.x + self.x, r.y + self.y, r.width, r.height))
    }

    /// Shrinks the window to the foreground bounds.
    pub fn trimmed(&self) -> Option<Self> {
        let r = self.mask.foreground_bounds()?;
        Some(Self::new(self.x + r.x, self.y + r.y, self.mask.crop(r).ok()?))
    }

    pub fn translate(&self, dx: usize, dy: usize) -> Self {
        Self::new(self.x + dx, self.y + dy, self.mask.clone())
    }

    /// Foreground restricted to `rect` (in frame coordinates).
    pub fn count_within(&self, rect: &PixelRect) -> usize {
        let Some(r) = self.rect().intersect(rect) else {
            return 0;
        };
        let mut n = 0;
        for y in r.y..r.y_end() {
            for x in r.x..r.x_end() {
                n += self.mask.get(x - self.x, y - self.y) as usize;
            }
        }
        n
    }

    pub fn intersection_count(&self, other: &Self) -> usize {
        self.intersection_within(other, None)
    }

    fn intersection_within(&self, other: &Self, limit: Option<&PixelRect>) -> usize {
        let Some(mut r) = self.rect().intersect(&other.rect()) else {
            return 0;
        };
        if let Some(limit) = limit {
            match r.intersect(limit) {
                Some(rr) => r = rr,
                None => return 0,
            }
        }
        let mut n = 0;
        for y in r.y..r.y_end() {
            for x in r.x..r.x_end() {
                n += (self.mask.get(x - self.x, y - self.y) && other.mask.get(x - other.x, y - other.y)) as usize;
            }
        }
        n
    }

    pub fn iou(&self, other: &Self) -> f64 {
        let inter = self.intersection_count(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// IoU computed only over pixels inside `rect`.
    pub fn iou_within(&self, other: &Self, rect: &PixelRect) -> f64 {
        let inter = self.intersection_within(other, Some(rect));
        let union = self.count_within(rect) + other.count_within(rect) - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Pixel-wise union of two placed masks.
    pub fn union(&self, other: &Self) -> Self {
        let r = self.rect().union(&other.rect());
        let mut m = BinaryMask::new(r.width, r.height).expect("non-empty union");
        for (x, y) in self.foreground().chain(other.foreground()) {
            m.set(x - r.x, y - r.y, true);
        }
        Self::new(r.x, r.y, m)
    }

    /// Part of the mask inside `rect`, trimmed. `None` when nothing is left.
    pub fn clip(&self, rect: &PixelRect) -> Option<Self> {
        let r = self.rect().intersect(rect)?;
        let local = PixelRect::new(r.x - self.x, r.y - self.y, r.width, r.height);
        Self::new(r.x, r.y, self.mask.crop(local).ok()?).trimmed()
    }

    /// Expands to a full `width x height` frame, clipping anything outside.
    pub fn to_full(&self, width: usize, height: usize) -> Result<BinaryMask, GeometryError> {
        let mut m = BinaryMask::new(width, height)?;
        for (x, y) in self.foreground() {
            if x < width && y < height {
                m.set(x, y, true);
            }
        }
        Ok(m)
    }
}

/// Run-length encoding used for persistence: alternating background and
/// foreground run lengths in row-major order, starting with background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct PlacedMaskRepr {
    x: usize,
    y: usize,
    width: usize,
    height: usize,
    runs: Vec<u32>,
}

impl Serialize for PlacedMask {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u32;
        for &b in self.mask.bits() {
            if b != current {
                runs.push(len);
                current = b;
                len = 0;
            }
            len += 1;
        }
        runs.push(len);
        PlacedMaskRepr {
            x: self.x,
            y: self.y,
            width: self.mask.width(),
            height: self.mask.height(),
            runs,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PlacedMask {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let repr = PlacedMaskRepr::deserialize(deserializer)?;
        let mut bits = Vec::with_capacity(repr.width * repr.height);
        let mut value = false;
        for run in repr.runs {
            bits.extend(std::iter::repeat_n(value, run as usize));
            value = !value;
        }
        let mask = BinaryMask::from_bits(repr.width, repr.height, bits).map_err(D::Error::custom)?;
        Ok(Self::new(repr.x, repr.y, mask))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(w: usize, h: usize, x0: usize, y0: usize, side: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| x >= x0 && x < x0 + side && y >= y0 && y < y0 + side).unwrap()
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(BinaryMask::new(0, 3).is_err());
        assert!(BinaryMask::from_bits(2, 2, vec![true; 3]).is_err());
    }

    #[test]
    fn identical_masks_iou_one() {
        let a = square(10, 10, 2, 2, 4);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_masks_iou_zero() {
        assert_eq!(mask_iou(&square(10, 10, 0, 0, 3), &square(10, 10, 5, 5, 3)).unwrap(), 0.0);
    }

    #[test]
    fn corner_sharing_squares_one_seventh() {
        let a = square(4, 4, 0, 0, 2);
        let b = square(4, 4, 1, 1, 2);
        assert_eq!(mask_iou(&a, &b).unwrap(), 1.0 / 7.0);
    }

    #[test]
    fn empty_union_is_zero() {
        let a = BinaryMask::new(3, 3).unwrap();
        assert_eq!(mask_iou(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let a = BinaryMask::new(3, 3).unwrap();
        let b = BinaryMask::new(3, 4).unwrap();
        assert!(matches!(mask_iou(&a, &b), Err(GeometryError::DimensionMismatch { .. })));
    }

    #[test]
    fn rotate90_pixel_convention() {
        let mut m = BinaryMask::new(5, 3).unwrap();
        m.set(1, 0, true);
        let r = m.rotate90();
        assert_eq!(r.dims(), (3, 5));
        assert!(r.get(3 - 1 - 0, 1));
    }

    #[test]
    fn placed_iou_matches_full_iou() {
        let a = square(30, 30, 3, 4, 10);
        let b = square(30, 30, 8, 9, 12);
        let pa = PlacedMask::from_full(&a).unwrap();
        let pb = PlacedMask::from_full(&b).unwrap();
        assert_eq!(pa.iou(&pb), mask_iou(&a, &b).unwrap());
        assert_eq!(pa.to_full(30, 30).unwrap(), a);
    }

    #[test]
    fn iou_within_limits_to_window() {
        let a = PlacedMask::from_full(&square(20, 20, 0, 0, 10)).unwrap();
        let b = PlacedMask::from_full(&square(20, 20, 5, 0, 10)).unwrap();
        let r = PixelRect::new(5, 0, 5, 10);
        assert_eq!(a.iou_within(&b, &r), 1.0);
    }

    #[test]
    fn rle_serde_round_trip() {
        let m = PlacedMask::new(7, 9, square(6, 5, 1, 1, 3));
        let json = serde_json::to_string(&m).unwrap();
        let back: PlacedMask = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }

    proptest! {
        #[test]
        fn mask_iou_symmetric_bounded(bits_a in proptest::collection::vec(any::<bool>(), 64),
                                      bits_b in proptest::collection::vec(any::<bool>(), 64)) {
            let a = BinaryMask::from_bits(8, 8, bits_a).unwrap();
            let b = BinaryMask::from_bits(8, 8, bits_b).unwrap();
            let ab = mask_iou(&a, &b).unwrap();
            prop_assert_eq!(ab, mask_iou(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab == 1.0, a == b && !a.is_empty());
            prop_assert_eq!(a.count(), a.foreground().count());
        }
    }
}
