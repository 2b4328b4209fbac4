use image::{imageops, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::geometry::{BoundingBox, Point};

/// Grey fill used for the padded border, as in the training pipeline.
pub const PAD_VALUE: u8 = 114;

/// Maps between source-image coordinates and the square, padded network input.
/// `input = source * scale + pad`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LetterboxTransform {
    pub scale: f64,
    pub pad_x: f64,
    pub pad_y: f64,
    pub input_size: usize,
    pub source_width: usize,
    pub source_height: usize,
}

impl LetterboxTransform {
    pub fn new(source_width: usize, source_height: usize, input_size: usize) -> Self {
        let scale = input_size as f64 / source_width.max(source_height) as f64;
        let (w, h) = Self::resized_dims(source_width, source_height, scale, input_size);
        Self {
            scale,
            pad_x: ((input_size - w) / 2) as f64,
            pad_y: ((input_size - h) / 2) as f64,
            input_size,
            source_width,
            source_height,
        }
    }

    fn resized_dims(w: usize, h: usize, scale: f64, size: usize) -> (usize, usize) {
        let rw = ((w as f64 * scale).round() as usize).clamp(1, size);
        let rh = ((h as f64 * scale).round() as usize).clamp(1, size);
        (rw, rh)
    }

    pub fn resized_size(&self) -> (usize, usize) {
        Self::resized_dims(self.source_width, self.source_height, self.scale, self.input_size)
    }

    pub fn is_identity(&self) -> bool {
        self.scale == 1.0 && self.pad_x == 0.0 && self.pad_y == 0.0
    }

    pub fn to_input(&self, p: Point) -> Point {
        Point::new(p.x * self.scale + self.pad_x, p.y * self.scale + self.pad_y)
    }

    pub fn to_source(&self, p: Point) -> Point {
        Point::new((p.x - self.pad_x) / self.scale, (p.y - self.pad_y) / self.scale)
    }

    pub fn box_to_input(&self, b: &BoundingBox) -> BoundingBox {
        let a = self.to_input(Point::new(b.x0, b.y0));
        let c = self.to_input(Point::new(b.x1, b.y1));
        BoundingBox { x0: a.x, y0: a.y, x1: c.x, y1: c.y }
    }

    pub fn box_to_source(&self, b: &BoundingBox) -> BoundingBox {
        let a = self.to_source(Point::new(b.x0, b.y0));
        let c = self.to_source(Point::new(b.x1, b.y1));
        BoundingBox { x0: a.x, y0: a.y, x1: c.x, y1: c.y }
    }
}

/// Resizes `image` so its longer side equals `input_size`, pads it to a
/// square and returns a planar RGB tensor (`3 x size x size`) scaled to [0,1].
pub fn preprocess(image: &RgbImage, input_size: usize) -> (Vec<f32>, LetterboxTransform) {
    let t = LetterboxTransform::new(image.width() as usize, image.height() as usize, input_size);
    let (rw, rh) = t.resized_size();
    let resized;
    let src = if (rw, rh) == (image.width() as usize, image.height() as usize) {
        image
    } else {
        resized = imageops::resize(image, rw as u32, rh as u32, imageops::FilterType::Triangle);
        &resized
    };
    let plane = input_size * input_size;
    let mut tensor = vec![PAD_VALUE as f32 / 255.0; 3 * plane];
    let (px, py) = (t.pad_x as usize, t.pad_y as usize);
    for (x, y, &Rgb(rgb)) in src.enumerate_pixels() {
        let i = (y as usize + py) * input_size + x as usize + px;
        for c in 0..3 {
            tensor[c * plane + i] = rgb[c] as f32 / 255.0;
        }
    }
    (tensor, t)
}
