use image::imageops::{self, FilterType};
use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{child_id, AnnotatedImage, AnnotatedObject, DatasetError};
use crate::geometry::Point;

/// Pixel and vertex transform applied to a sample.
///
/// Vertices live on the continuous pixel-corner frame, so a horizontal flip
/// maps `x` to `W - x` while the pixel column `i` goes to `W - 1 - i`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Identity,
    FlipHorizontal,
    FlipVertical,
    /// Clockwise quarter turns: 90, 180 or 270 degrees.
    Rotate(u16),
    Scale(f64),
}

impl Transform {
    pub fn output_size(&self, width: usize, height: usize) -> (usize, usize) {
        match *self {
            Transform::Rotate(90) | Transform::Rotate(270) => (height, width),
            Transform::Scale(s) => (
                ((width as f64 * s).round() as usize).max(1),
                ((height as f64 * s).round() as usize).max(1),
            ),
            _ => (width, height),
        }
    }

    /// Maps a vertex of a `width x height` image.
    pub fn apply_point(&self, p: Point, width: usize, height: usize) -> Point {
        let (w, h) = (width as f64, height as f64);
        match *self {
            Transform::Identity | Transform::Rotate(0) => p,
            Transform::FlipHorizontal => Point::new(w - p.x, p.y),
            Transform::FlipVertical => Point::new(p.x, h - p.y),
            Transform::Rotate(90) => Point::new(h - p.y, p.x),
            Transform::Rotate(180) => Point::new(w - p.x, h - p.y),
            Transform::Rotate(270) => Point::new(p.y, w - p.x),
            Transform::Rotate(_) => p,
            Transform::Scale(s) => Point::new(p.x * s, p.y * s),
        }
    }

    pub fn apply_image(&self, image: &RgbImage) -> RgbImage {
        match *self {
            Transform::FlipHorizontal => imageops::flip_horizontal(image),
            Transform::FlipVertical => imageops::flip_vertical(image),
            Transform::Rotate(90) => imageops::rotate90(image),
            Transform::Rotate(180) => imageops::rotate180(image),
            Transform::Rotate(270) => imageops::rotate270(image),
            Transform::Identity | Transform::Rotate(_) => image.clone(),
            Transform::Scale(_) => {
                let (w, h) = self.output_size(image.width() as usize, image.height() as usize);
                imageops::resize(image, w as u32, h as u32, FilterType::Triangle)
            }
        }
    }

    fn suffix(&self) -> String {
        match *self {
            Transform::Identity => "id".into(),
            Transform::FlipHorizontal => "fh".into(),
            Transform::FlipVertical => "fv".into(),
            Transform::Rotate(d) => format!("r{d}"),
            Transform::Scale(s) => format!("s{s}").replace('.', "_"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
    /// Clockwise quarter turns in degrees (90, 180, 270).
    pub rotations: Vec<u16>,
    pub scale_factors: Vec<f64>,
    /// Recorded with the dataset; every transform is exact, so outputs do
    /// not depend on it.
    pub seed: u64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            horizontal_flip: true,
            vertical_flip: true,
            rotations: vec![90],
            scale_factors: Vec::new(),
            seed: 0,
        }
    }
}

impl AugmentationSpec {
    pub fn none() -> Self {
        Self {
            horizontal_flip: false,
            vertical_flip: false,
            rotations: Vec::new(),
            scale_factors: Vec::new(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if let Some(r) = self.rotations.iter().find(|r| ![90, 180, 270].contains(*r)) {
            return Err(DatasetError::InvalidSpec(format!("rotation {r} is not 90, 180 or 270")));
        }
        if let Some(s) = self.scale_factors.iter().find(|s| !(**s > 0.25 && **s < 4.0)) {
            return Err(DatasetError::InvalidSpec(format!("scale factor {s} outside (0.25, 4.0)")));
        }
        Ok(())
    }

    /// Enabled transforms in output order.
    pub fn transforms(&self) -> Vec<Transform> {
        let mut t = Vec::new();
        if self.horizontal_flip {
            t.push(Transform::FlipHorizontal);
        }
        if self.vertical_flip {
            t.push(Transform::FlipVertical);
        }
        t.extend(self.rotations.iter().map(|&r| Transform::Rotate(r)));
        t.extend(self.scale_factors.iter().map(|&s| Transform::Scale(s)));
        t
    }
}

/// One derived sample per enabled transform. The source itself is not
/// included. Outlines that degenerate (possible only when scaling down) are
/// dropped.
pub fn augment(image: &AnnotatedImage, spec: &AugmentationSpec) -> Result<Vec<AnnotatedImage>, DatasetError> {
    spec.validate()?;
    debug_assert_eq!(image.transform, Transform::Identity);
    Ok(spec
        .transforms()
        .into_iter()
        .map(|t| {
            let (width, height) = t.output_size(image.width, image.height);
            let objects = image
                .objects
                .iter()
                .filter_map(|o| {
                    let polygon = o
                        .polygon
                        .map_points(|p| t.apply_point(p, image.width, image.height))
                        .ok()?;
                    Some(AnnotatedObject { class: o.class, polygon })
                })
                .collect();
            AnnotatedImage {
                id: child_id(&image.id, &t.suffix()),
                group: image.group.clone(),
                image_path: image.image_path.clone(),
                width,
                height,
                window: image.window,
                canvas: (image.width, image.height),
                transform: t,
                objects,
            }
        })
        .collect())
}
