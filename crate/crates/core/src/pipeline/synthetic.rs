//! Model-free stand-ins for exercising the tiled pipeline.

use image::{Rgb, RgbImage};

use crate::geometry::{PixelRect, PlacedMask};
use crate::inference::{Detection, InferenceError, TileDetector};
use crate::raster::{RasterError, RasterSource};
use crate::CellClass;

/// Uniform raster of any size; windows are generated on demand.
#[derive(Debug, Clone, Copy)]
pub struct BlankSource {
    pub width: usize,
    pub height: usize,
    pub color: [u8; 3],
}

impl BlankSource {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            color: [235, 235, 235],
        }
    }
}

impl RasterSource for BlankSource {
    fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn read_window(&self, window: PixelRect) -> Result<RgbImage, RasterError> {
        if window.is_empty() || window.x_end() > self.width || window.y_end() > self.height {
            return Err(RasterError::OutOfBounds {
                window,
                width: self.width,
                height: self.height,
            });
        }
        Ok(RgbImage::from_pixel(window.width as u32, window.height as u32, Rgb(self.color)))
    }
}

/// A planted object in global coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedObject {
    pub class: CellClass,
    pub confidence: f64,
    pub mask: PlacedMask,
}

/// Reports the part of every planted object that falls inside the window,
/// as a real detector would see an object cut by the tile edge.
#[derive(Debug, Clone, Default)]
pub struct InjectedDetector {
    pub objects: Vec<PlantedObject>,
}

impl InjectedDetector {
    pub fn new(objects: Vec<PlantedObject>) -> Self {
        Self { objects }
    }
}

impl TileDetector for InjectedDetector {
    fn detect(&self, _tile: &RgbImage, window: PixelRect) -> Result<Vec<Detection>, InferenceError> {
        Ok(self
            .objects
            .iter()
            .filter_map(|o| {
                let clipped = o.mask.clip(&window)?;
                let local = PlacedMask::new(clipped.x - window.x, clipped.y - window.y, clipped.mask);
                Detection::from_mask(o.class, o.confidence, None, local)
            })
            .collect())
    }
}
