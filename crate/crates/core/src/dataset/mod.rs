//! Annotation parsing and preparation of training crops and labels.

mod augment;
mod export;
mod split;
mod tiles;
mod via;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::geometry::{PixelRect, Polygon};
use crate::CellClass;

pub use augment::{augment, AugmentationSpec, Transform};
pub use export::{
    export_training_images, export_training_labels, format_label_line, parse_label_file, render_sample, ExportSummary,
    LabelLine, MANIFEST_NAME,
};
pub use split::{split_dataset, split_grouped, DatasetSplit};
pub use tiles::{crop_to_training_tiles, training_tile_origins, MIN_KEPT_FRACTION};
pub use via::{parse_via_annotations, ViaDocument};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("malformed annotations at {locus}: {message}")]
    Parse { locus: String, message: String },
    #[error("unknown class label `{label}` in {file}, region {region}")]
    UnknownClass { file: String, region: usize, label: String },
    #[error("invalid augmentation spec: {0}")]
    InvalidSpec(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl DatasetError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedObject {
    pub class: CellClass,
    pub polygon: Polygon,
}

/// An image (or a derived crop) with its outlined objects.
///
/// Derived samples keep a recipe for their pixels: the `window` of the
/// source image followed by `transform`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedImage {
    /// Sample id, unique within a dataset and usable as a file stem.
    pub id: String,
    /// Id of the original image; derived samples share it.
    pub group: String,
    pub image_path: PathBuf,
    pub width: usize,
    pub height: usize,
    pub window: Option<PixelRect>,
    /// Size before `transform`: the window, padded on the right and bottom.
    pub canvas: (usize, usize),
    pub transform: Transform,
    pub objects: Vec<AnnotatedObject>,
}

impl AnnotatedImage {
    pub fn new(id: impl Into<String>, image_path: impl Into<PathBuf>, width: usize, height: usize) -> Self {
        let id = id.into();
        Self {
            group: id.clone(),
            id,
            image_path: image_path.into(),
            width,
            height,
            window: None,
            canvas: (width, height),
            transform: Transform::Identity,
            objects: Vec::new(),
        }
    }

    pub fn count(&self, class: CellClass) -> usize {
        self.objects.iter().filter(|o| o.class == class).count()
    }

    /// Sets the image size and clips every outline to it. Outlines with
    /// nothing left inside are dropped; returns how many.
    pub fn set_dimensions(&mut self, width: usize, height: usize) -> usize {
        self.width = width;
        self.height = height;
        self.canvas = (width, height);
        let before = self.objects.len();
        self.objects = std::mem::take(&mut self.objects)
            .into_iter()
            .filter_map(|o| {
                let polygon = o.polygon.clip_to_rect(0.0, 0.0, width as f64, height as f64)?;
                Some(AnnotatedObject { class: o.class, polygon })
            })
            .collect();
        before - self.objects.len()
    }
}

/// Id with a suffix, e.g. `slide3` + `t1_0` -> `slide3_t1_0`.
pub(crate) fn child_id(parent: &str, suffix: &str) -> String {
    format!("{parent}_{suffix}")
}
