//! Length, width and area of segmented objects.
//!
//! Length is the longest path through the thinned mask, width is the
//! diameter of the largest inscribed disk, and area is enclosed by the
//! object's contour. Pixel values are converted to micrometres with a single
//! isotropic calibration factor.

mod distance;
mod skeleton;
mod thin;

use serde::{Deserialize, Serialize};

use crate::geometry::{polygon_area, BinaryMask, Polygon};
use crate::inference::Detection;
use crate::CellClass;

pub use distance::{inscribed_width, squared_distance_transform, width_from_distance_transform};
pub use skeleton::{longest_path, skeleton_length, LengthMode, LongestPath, Skeleton};
pub use thin::thin;

/// Microscope pixel size of the reference acquisition setup (10x objective,
/// 0.70x C-mount adapter).
pub const DEFAULT_MICRONS_PER_PIXEL: f64 = 0.65;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MorphometryError {
    #[error("mask has no foreground")]
    EmptyMask,
    #[error("object too small to measure: {pixels} px (need at least {min})")]
    Degenerate { pixels: usize, min: usize },
    #[error("calibration must be strictly positive, got {0}")]
    InvalidCalibration(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub microns_per_pixel: f64,
}

impl CalibrationConfig {
    pub fn new(microns_per_pixel: f64) -> Result<Self, MorphometryError> {
        if !(microns_per_pixel > 0.0 && microns_per_pixel.is_finite()) {
            return Err(MorphometryError::InvalidCalibration(microns_per_pixel));
        }
        Ok(Self { microns_per_pixel })
    }

    pub fn to_microns(&self, px: f64) -> f64 {
        px * self.microns_per_pixel
    }

    pub fn to_square_microns(&self, px2: f64) -> f64 {
        px2 * self.microns_per_pixel * self.microns_per_pixel
    }
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            microns_per_pixel: DEFAULT_MICRONS_PER_PIXEL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MorphometryConfig {
    pub length_mode: LengthMode,
    /// Terminal skeleton branches shorter than this are pruned before the
    /// longest path is extracted.
    pub spur_prune_px: usize,
    /// Also compute the Euclidean length next to the primary one.
    pub report_euclidean: bool,
    /// Thinning stops about one half-width short of each tip. When set,
    /// each end of the longest path is extended by the distance from the
    /// end pixel to the object boundary.
    pub tip_extension: bool,
}

impl Default for MorphometryConfig {
    fn default() -> Self {
        Self {
            length_mode: LengthMode::PixelCount,
            spur_prune_px: 5,
            report_euclidean: false,
            tip_extension: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphometryRecord {
    pub object_id: u64,
    pub class: CellClass,
    pub length_px: f64,
    pub width_px: f64,
    pub area_px2: f64,
    pub length_um: f64,
    pub width_um: f64,
    pub area_um2: f64,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub euclidean_length_px: Option<f64>,
}

/// Pixel-space measurements of one mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeMeasurement {
    pub length_px: f64,
    pub width_px: f64,
    pub area_px2: f64,
    pub euclidean_length_px: Option<f64>,
}

pub const MIN_MEASURABLE_PIXELS: usize = 3;

/// Measures a mask whose outline is `contour` (in the mask's own frame or
/// any translate of it; only the area is taken from the contour).
pub fn measure_mask(
    mask: &BinaryMask,
    contour: &Polygon,
    config: &MorphometryConfig,
) -> Result<ShapeMeasurement, MorphometryError> {
    let pixels = mask.count();
    if pixels < MIN_MEASURABLE_PIXELS {
        return Err(MorphometryError::Degenerate {
            pixels,
            min: MIN_MEASURABLE_PIXELS,
        });
    }
    let skeleton = thin(mask)?.prune_spurs(config.spur_prune_px);
    let dt = squared_distance_transform(mask);
    let width = mask.width();
    let path_length = |mode: LengthMode| {
        let Some(path) = longest_path(&skeleton, mode) else {
            return 0.0;
        };
        if !config.tip_extension {
            return path.length;
        }
        // The end pixel already counts half a pixel past its center and the
        // boundary lies half a pixel short of the nearest background center.
        let reach = |(x, y): (usize, usize)| (dt[y * width + x].sqrt() - 1.0).max(0.0);
        path.length + reach(path.ends[0]) + reach(path.ends[1])
    };
    let length_px = path_length(config.length_mode);
    let euclidean_length_px = match (config.report_euclidean, config.length_mode) {
        (true, LengthMode::Euclidean) => Some(length_px),
        (true, LengthMode::PixelCount) => Some(path_length(LengthMode::Euclidean)),
        (false, _) => None,
    };
    let width_px = inscribed_width(mask);
    Ok(ShapeMeasurement {
        length_px,
        width_px,
        area_px2: polygon_area(contour),
        euclidean_length_px,
    })
}

/// Measures one detection and converts to micrometres.
pub fn measure(
    object_id: u64,
    detection: &Detection,
    calibration: &CalibrationConfig,
    config: &MorphometryConfig,
) -> Result<MorphometryRecord, MorphometryError> {
    let shape = measure_mask(&detection.mask.mask, &detection.contour, config)?;
    Ok(MorphometryRecord {
        object_id,
        class: detection.class,
        length_px: shape.length_px,
        width_px: shape.width_px,
        area_px2: shape.area_px2,
        length_um: calibration.to_microns(shape.length_px),
        width_um: calibration.to_microns(shape.width_px),
        area_um2: calibration.to_square_microns(shape.area_px2),
        confidence: detection.confidence,
        euclidean_length_px: shape.euclidean_length_px,
    })
}

/// Measures every detection in parallel. Object ids are 1-based input
/// positions; detections too small to measure are skipped and counted.
pub fn measure_all(
    detections: &[Detection],
    calibration: &CalibrationConfig,
    config: &MorphometryConfig,
) -> (Vec<MorphometryRecord>, usize) {
    use rayon::prelude::*;
    let results: Vec<_> = detections
        .par_iter()
        .enumerate()
        .map(|(i, d)| measure(i as u64 + 1, d, calibration, config))
        .collect();
    let total = results.len();
    let records: Vec<MorphometryRecord> = results.into_iter().filter_map(Result::ok).collect();
    let skipped = total - records.len();
    (records, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{extract_contour, rasterize, BoundingBox, PlacedMask, Point};

    fn bar_polygon(cx: f64, cy: f64, length: f64, width: f64, deg: f64) -> Polygon {
        let (c, s) = (deg.to_radians().cos(), deg.to_radians().sin());
        let (hl, hw) = (length / 2.0, width / 2.0);
        Polygon::new(
            [(-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)]
                .iter()
                .map(|&(x, y)| Point::new(cx + x * c - y * s, cy + x * s + y * c)),
        )
        .unwrap()
    }

    fn detection_from(mask: &BinaryMask) -> Detection {
        let placed = PlacedMask::from_full(mask).unwrap();
        let contour = extract_contour(&placed.mask).unwrap();
        Detection {
            class: CellClass::Fiber,
            confidence: 0.9,
            bbox: placed.rect().to_box(),
            contour: contour.translate(placed.x as f64, placed.y as f64),
            mask: placed,
        }
    }

    fn measure_bar(length: f64, width: f64, deg: f64, mode: LengthMode) -> ShapeMeasurement {
        let size = (length + width) as usize + 40;
        let c = size as f64 / 2.0;
        let m = rasterize(&bar_polygon(c, c, length, width, deg), size, size).unwrap();
        let cfg = MorphometryConfig {
            length_mode: mode,
            ..Default::default()
        };
        measure_mask(&m, &extract_contour(&m).unwrap(), &cfg).unwrap()
    }

    #[test]
    fn hundred_pixel_path_is_65_microns() {
        let cal = CalibrationConfig::default();
        assert_eq!(cal.to_microns(100.0), 65.0);
        let m = BinaryMask::from_fn(120, 5, |x, y| (10..110).contains(&x) && y == 2).unwrap();
        let rec = measure(1, &detection_from(&m), &cal, &MorphometryConfig::default()).unwrap();
        assert_eq!(rec.length_px, 100.0);
        assert_eq!(rec.length_um, 65.0);
    }

    #[test]
    fn square_area_in_square_microns() {
        let m = BinaryMask::from_fn(120, 120, |x, y| x < 100 && y < 100).unwrap();
        let rec = measure(7, &detection_from(&m), &CalibrationConfig::default(), &MorphometryConfig::default()).unwrap();
        assert_eq!(rec.area_px2, 10_000.0);
        assert!((rec.area_um2 - 4_225.0).abs() < 1e-9);
        assert_eq!(rec.object_id, 7);
    }

    #[test]
    fn unit_fields_follow_calibration() {
        let m = rasterize(&bar_polygon(60.0, 60.0, 80.0, 12.0, 30.0), 120, 120).unwrap();
        let cal = CalibrationConfig::new(0.37).unwrap();
        let rec = measure(1, &detection_from(&m), &cal, &MorphometryConfig::default()).unwrap();
        assert!((rec.length_um - rec.length_px * 0.37).abs() < 1e-9);
        assert!((rec.width_um - rec.width_px * 0.37).abs() < 1e-9);
        assert!((rec.area_um2 - rec.area_px2 * 0.37 * 0.37).abs() < 1e-9);
        assert!(rec.length_px > 0.0 && rec.width_px > 0.0 && rec.area_px2 > 0.0);
    }

    #[test]
    fn invalid_calibration_rejected() {
        assert!(CalibrationConfig::new(0.0).is_err());
        assert!(CalibrationConfig::new(-1.0).is_err());
        assert!(CalibrationConfig::new(f64::NAN).is_err());
    }

    #[test]
    fn degenerate_mask_rejected() {
        let m = BinaryMask::from_fn(5, 5, |x, y| y == 2 && (x == 1 || x == 2)).unwrap();
        assert!(matches!(
            measure_mask(&m, &extract_contour(&m).unwrap(), &MorphometryConfig::default()),
            Err(MorphometryError::Degenerate { pixels: 2, .. })
        ));
    }

    #[test]
    fn measure_is_pure() {
        let m = rasterize(&bar_polygon(50.0, 50.0, 70.0, 9.0, 20.0), 100, 100).unwrap();
        let d = detection_from(&m);
        let cfg = MorphometryConfig::default();
        let cal = CalibrationConfig::default();
        assert_eq!(measure(1, &d, &cal, &cfg).unwrap(), measure(1, &d, &cal, &cfg).unwrap());
    }

    #[test]
    fn quarter_turn_gives_identical_length_and_width() {
        for (l, w) in [(120.0, 10.0), (200.0, 24.0), (77.0, 7.0)] {
            let size = 260;
            let m = rasterize(&bar_polygon(130.0, 130.0, l, w, 0.0), size, size).unwrap();
            let r = m.rotate90();
            let cfg = MorphometryConfig::default();
            let a = measure_mask(&m, &extract_contour(&m).unwrap(), &cfg).unwrap();
            let b = measure_mask(&r, &extract_contour(&r).unwrap(), &cfg).unwrap();
            assert_eq!(a.length_px, b.length_px);
            assert_eq!(a.width_px, b.width_px);
            assert_eq!(a.area_px2, b.area_px2);
        }
    }

    #[test]
    fn diagonal_copy_agrees_within_five_percent() {
        for (l, w) in [(150.0, 12.0), (240.0, 20.0)] {
            let a = measure_bar(l, w, 0.0, LengthMode::Euclidean);
            let b = measure_bar(l, w, 45.0, LengthMode::Euclidean);
            assert!((a.length_px - b.length_px).abs() / a.length_px <= 0.05, "{a:?} {b:?}");
            assert!((a.width_px - b.width_px).abs() / a.width_px <= 0.05 + 1.0 / a.width_px, "{a:?} {b:?}");
        }
    }

    #[test]
    fn doubling_scale() {
        for (l, w) in [(100.0, 10.0), (150.0, 16.0)] {
            let a = measure_bar(l, w, 0.0, LengthMode::PixelCount);
            let b = measure_bar(2.0 * l, 2.0 * w, 0.0, LengthMode::PixelCount);
            assert!((b.length_px / a.length_px - 2.0).abs() <= 0.06, "{a:?} {b:?}");
            assert!((b.width_px / a.width_px - 2.0).abs() <= 0.06, "{a:?} {b:?}");
            assert!((b.area_px2 / a.area_px2 - 4.0).abs() <= 0.12, "{a:?} {b:?}");
        }
    }

    #[test]
    fn elongated_bars_are_longer_than_wide() {
        for (l, w) in [(60.0, 20.0), (90.0, 30.0), (300.0, 40.0)] {
            let m = measure_bar(l, w, 0.0, LengthMode::PixelCount);
            assert!(m.width_px <= m.length_px, "{m:?}");
        }
    }

    #[test]
    fn bbox_type_is_shared() {
        let b = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(b.area(), 1.0);
    }
}
