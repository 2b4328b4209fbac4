//! Turning an exported segmentation network into per-object detections.
//!
//! The network is treated as a black box with one image input
//! (`1 x 3 x S x S`, RGB in [0,1]) and two outputs: a candidate matrix with
//! `4 + classes + prototypes` values per anchor and a prototype tensor at a
//! quarter of the input resolution. Everything around the forward pass
//! (letterboxing, decoding, class-wise NMS, mask composition and mapping back
//! to the source image) lives here and is independent of the runtime.
//!
//! Masks of different detections may overlap; each is composed on its own.

mod components;
mod compose;
mod decode;
mod letterbox;
#[cfg(feature = "onnx")]
mod onnx;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{extract_contour, BoundingBox, PixelRect, PlacedMask, Polygon};
use crate::CellClass;

pub use components::ComponentDetector;
pub use compose::compose_mask;
pub use decode::{decode, nms, rank_order, Candidate, RawPrediction};
pub use letterbox::{preprocess, LetterboxTransform, PAD_VALUE};
#[cfg(feature = "onnx")]
pub use onnx::OnnxBackend;

/// Environment variable naming the default model file.
pub const MODEL_ENV: &str = "FIBERSCOPE_MODEL";

const STRIDES: [usize; 3] = [8, 16, 32];

#[derive(Debug, thiserror::Error)]
pub enum InferenceError {
    #[error("model contract violated for {what}: expected shape {expected:?}, got {actual:?}")]
    ModelContract {
        what: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("invalid model configuration: {0}")]
    InvalidSpec(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot load model {path}: {message}")]
    Load { path: PathBuf, message: String },
    #[error("forward pass failed: {0}")]
    Runtime(String),
    #[error("device {0:?} is not available in this build")]
    DeviceUnavailable(Device),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    #[default]
    Cpu,
    Accelerator,
}

/// Static shape contract of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_size: usize,
    pub classes: Vec<CellClass>,
    pub prototype_count: usize,
}

impl ModelSpec {
    pub fn new(input_size: usize, classes: Vec<CellClass>, prototype_count: usize) -> Result<Self, InferenceError> {
        if input_size == 0 || input_size % 32 != 0 {
            return Err(InferenceError::InvalidSpec(format!(
                "input size {input_size} is not a positive multiple of 32"
            )));
        }
        if classes.is_empty() {
            return Err(InferenceError::InvalidSpec("no class names".into()));
        }
        if prototype_count == 0 {
            return Err(InferenceError::InvalidSpec("prototype count must be positive".into()));
        }
        Ok(Self {
            input_size,
            classes,
            prototype_count,
        })
    }

    /// Fiber/vessel model at the given input size with 32 prototypes.
    pub fn standard(input_size: usize) -> Result<Self, InferenceError> {
        Self::new(input_size, CellClass::ALL.to_vec(), 32)
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn anchor_count(&self) -> usize {
        STRIDES.iter().map(|s| (self.input_size / s).pow(2)).sum()
    }

    pub fn row_len(&self) -> usize {
        4 + self.class_count() + self.prototype_count
    }

    pub fn proto_side(&self) -> usize {
        self.input_size / 4
    }
}

/// Thresholds applied around the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceParams {
    pub conf_threshold: f64,
    pub iou_threshold: f64,
    pub mask_threshold: f64,
    /// Source pixels added around each box before masks are cropped to it.
    pub box_dilation: f64,
}

impl Default for InferenceParams {
    fn default() -> Self {
        Self {
            conf_threshold: 0.25,
            iou_threshold: 0.7,
            mask_threshold: 0.5,
            box_dilation: 2.0,
        }
    }
}

impl InferenceParams {
    /// Operating point where F1 peaks on the validation set.
    pub const F1_OPTIMAL_CONF: f64 = 0.66;

    /// Named parameter presets: `default` and `f1-optimal`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default()),
            "f1-optimal" => Some(Self {
                conf_threshold: Self::F1_OPTIMAL_CONF,
                ..Self::default()
            }),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        for (name, v) in [
            ("conf_threshold", self.conf_threshold),
            ("iou_threshold", self.iou_threshold),
            ("mask_threshold", self.mask_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(InferenceError::InvalidParameter(format!("{name} must be in [0,1], got {v}")));
            }
        }
        if !(self.box_dilation >= 0.0 && self.box_dilation.is_finite()) {
            return Err(InferenceError::InvalidParameter(format!(
                "box_dilation must be non-negative, got {}",
                self.box_dilation
            )));
        }
        Ok(())
    }
}

/// One detected object in source-image coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: CellClass,
    pub confidence: f64,
    pub bbox: BoundingBox,
    pub mask: PlacedMask,
    pub contour: Polygon,
}

impl Detection {
    /// Builds a detection from a mask, deriving the contour. The box is
    /// grown to the mask bounds when it holds less than 99% of the
    /// foreground. `None` for an empty mask.
    pub fn from_mask(class: CellClass, confidence: f64, bbox: Option<BoundingBox>, mask: PlacedMask) -> Option<Self> {
        let mask = mask.trimmed()?;
        let bounds = mask.rect().to_box();
        let bbox = match bbox {
            Some(b) if box_holds(&b, &mask) >= 0.99 => b,
            Some(b) => b.union(&bounds),
            None => bounds,
        };
        let contour = extract_contour(&mask.mask).ok()?.translate(mask.x as f64, mask.y as f64);
        Some(Self {
            class,
            confidence,
            bbox,
            mask,
            contour,
        })
    }

    pub fn area(&self) -> usize {
        self.mask.area()
    }

    /// Shifts the detection by a whole-pixel offset.
    pub fn translate(&self, dx: usize, dy: usize) -> Self {
        Self {
            class: self.class,
            confidence: self.confidence,
            bbox: self.bbox.translate(dx as f64, dy as f64),
            mask: self.mask.translate(dx, dy),
            contour: self.contour.translate(dx as f64, dy as f64),
        }
    }
}

/// Fraction of mask foreground whose pixel centers lie inside `b`.
fn box_holds(b: &BoundingBox, mask: &PlacedMask) -> f64 {
    let total = mask.area();
    if total == 0 {
        return 1.0;
    }
    let inside = mask
        .foreground()
        .filter(|&(x, y)| {
            let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
            cx >= b.x0 && cx <= b.x1 && cy >= b.y0 && cy <= b.y1
        })
        .count();
    inside as f64 / total as f64
}

/// Anything that can run the network on a preprocessed tensor.
pub trait Backend: Send + Sync {
    fn spec(&self) -> &ModelSpec;

    fn forward(&self, input: &[f32]) -> Result<RawPrediction, InferenceError>;
}

/// A loaded model plus its shape contract. Immutable and shareable.
#[derive(Clone)]
pub struct ModelSession {
    pub model_path: Option<PathBuf>,
    pub device: Device,
    backend: Arc<dyn Backend>,
}

impl std::fmt::Debug for ModelSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelSession")
            .field("model_path", &self.model_path)
            .field("device", &self.device)
            .field("spec", self.spec())
            .finish()
    }
}

impl ModelSession {
    pub fn from_backend(backend: Arc<dyn Backend>) -> Self {
        Self {
            model_path: None,
            device: Device::Cpu,
            backend,
        }
    }

    /// Loads an ONNX model. `input_size` overrides the size read from the
    /// model when its input dimension is symbolic.
    #[cfg(feature = "onnx")]
    pub fn load(path: &Path, device: Device, input_size: Option<usize>) -> Result<Self, InferenceError> {
        if device != Device::Cpu {
            return Err(InferenceError::DeviceUnavailable(device));
        }
        let backend = OnnxBackend::load(path, input_size)?;
        Ok(Self {
            model_path: Some(path.to_path_buf()),
            device,
            backend: Arc::new(backend),
        })
    }

    #[cfg(not(feature = "onnx"))]
    pub fn load(path: &Path, _device: Device, _input_size: Option<usize>) -> Result<Self, InferenceError> {
        Err(InferenceError::Load {
            path: path.to_path_buf(),
            message: "built without the `onnx` feature".into(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.backend.spec()
    }
}

/// Explicit path, else `$FIBERSCOPE_MODEL`.
pub fn resolve_model_path(explicit: Option<&Path>) -> Option<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(MODEL_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
}

/// Full single-image inference. Detections are sorted by confidence, highest first.
pub fn infer(session: &ModelSession, image: &RgbImage, params: &InferenceParams) -> Result<Vec<Detection>, InferenceError> {
    params.validate()?;
    let spec = session.spec();
    let (tensor, transform) = preprocess(image, spec.input_size);
    let raw = session.backend.forward(&tensor)?;
    let candidates = nms(decode(&raw, spec, params.conf_threshold)?, params.iou_threshold);
    Ok(candidates
        .par_iter()
        .filter_map(|c| {
            let class = *spec.classes.get(c.class_index)?;
            let mask = compose_mask(
                &c.coefficients,
                &raw,
                &c.bbox,
                &transform,
                params.mask_threshold as f32,
                params.box_dilation,
            )?;
            let bbox = transform
                .box_to_source(&c.bbox)
                .clamp(transform.source_width as f64, transform.source_height as f64);
            Detection::from_mask(class, c.confidence, Some(bbox), mask)
        })
        .collect())
}

/// Per-tile detection step used by the tiled pipeline.
pub trait TileDetector: Send + Sync {
    /// Detects objects in `tile`, which was read from `window` of the full
    /// image. Returned coordinates are tile-local. Model-backed detectors
    /// ignore `window`; synthetic ones use it to inject known objects.
    fn detect(&self, tile: &RgbImage, window: PixelRect) -> Result<Vec<Detection>, InferenceError>;
}

/// A session bound to fixed thresholds.
#[derive(Debug, Clone)]
pub struct SessionDetector {
    pub session: ModelSession,
    pub params: InferenceParams,
}

impl TileDetector for SessionDetector {
    fn detect(&self, tile: &RgbImage, _window: PixelRect) -> Result<Vec<Detection>, InferenceError> {
        infer(&self.session, tile, &self.params)
    }
}
