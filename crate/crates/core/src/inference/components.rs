use image::RgbImage;

use crate::geometry::{label_components, BinaryMask, PixelRect, PlacedMask};
use crate::CellClass;

use super::{Detection, InferenceError, TileDetector};

/// Model-free detector for synthetic scenes and service smoke tests.
///
/// Every 8-connected component of pixels darker than `max_luma` becomes one
/// detection. Components whose mean blue exceeds mean red are vessels, the
/// rest fibers. Confidence is `1 - mean_luma / 255`. Overlapping objects
/// merge into one component, so this is no substitute for a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentDetector {
    pub max_luma: u8,
    pub min_area: usize,
}

impl Default for ComponentDetector {
    fn default() -> Self {
        Self {
            max_luma: 200,
            min_area: 3,
        }
    }
}

fn luma(p: &[u8; 3]) -> f64 {
    0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
}

struct Stats {
    rect: PixelRect,
    count: usize,
    luma: f64,
    red: f64,
    blue: f64,
}

impl TileDetector for ComponentDetector {
    fn detect(&self, tile: &RgbImage, _window: PixelRect) -> Result<Vec<Detection>, InferenceError> {
        let (w, h) = (tile.width() as usize, tile.height() as usize);
        let fg = BinaryMask::from_fn(w, h, |x, y| luma(&tile.get_pixel(x as u32, y as u32).0) < self.max_luma as f64)
            .map_err(|e| InferenceError::InvalidParameter(e.to_string()))?;
        let (labels, sizes) = label_components(&fg);
        let mut stats: Vec<Stats> = sizes
            .iter()
            .map(|_| Stats {
                rect: PixelRect::new(usize::MAX, usize::MAX, 0, 0),
                count: 0,
                luma: 0.0,
                red: 0.0,
                blue: 0.0,
            })
            .collect();
        let mut bounds = vec![(usize::MAX, usize::MAX, 0usize, 0usize); sizes.len()];
        for y in 0..h {
            for x in 0..w {
                let l = labels[y * w + x];
                if l == 0 {
                    continue;
                }
                let k = l as usize - 1;
                let p = tile.get_pixel(x as u32, y as u32).0;
                let s = &mut stats[k];
                s.count += 1;
                s.luma += luma(&p);
                s.red += p[0] as f64;
                s.blue += p[2] as f64;
                let b = &mut bounds[k];
                *b = (b.0.min(x), b.1.min(y), b.2.max(x + 1), b.3.max(y + 1));
            }
        }
        for (s, b) in stats.iter_mut().zip(&bounds) {
            s.rect = PixelRect::new(b.0, b.1, b.2.saturating_sub(b.0), b.3.saturating_sub(b.1));
        }
        let mut out = Vec::new();
        for (k, s) in stats.iter().enumerate() {
            if s.count < self.min_area {
                continue;
            }
            let label = k as u32 + 1;
            let r = s.rect;
            let mask = BinaryMask::from_fn(r.width, r.height, |x, y| labels[(y + r.y) * w + x + r.x] == label)
                .map_err(|e| InferenceError::InvalidParameter(e.to_string()))?;
            let n = s.count as f64;
            let class = if s.blue / n > s.red / n { CellClass::Vessel } else { CellClass::Fiber };
            let confidence = (1.0 - s.luma / n / 255.0).clamp(0.0, 1.0);
            if let Some(d) = Detection::from_mask(class, confidence, None, PlacedMask::new(r.x, r.y, mask)) {
                out.push(d);
            }
        }
        out.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        Ok(out)
    }
}
