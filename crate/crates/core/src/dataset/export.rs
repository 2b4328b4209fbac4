use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AnnotatedImage, DatasetError, DatasetSplit};
use crate::geometry::{Point, Polygon};
use crate::CellClass;

pub const MANIFEST_NAME: &str = "dataset.yaml";

/// Counts written by an export.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub train_images: usize,
    pub val_images: usize,
    pub fibers: usize,
    pub vessels: usize,
    /// Samples listed in neither side of the split.
    pub skipped: usize,
}

/// One parsed label line with vertices normalised to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelLine {
    pub class: CellClass,
    pub points: Vec<Point>,
}

fn coord(v: f64) -> String {
    let s = format!("{:.6}", v.clamp(0.0, 1.0));
    let s = s.trim_end_matches('0');
    if s.ends_with('.') {
        format!("{s}0")
    } else {
        s.to_string()
    }
}

/// `class x1 y1 x2 y2 ...` with coordinates divided by the image size.
pub fn format_label_line(class: CellClass, polygon: &Polygon, width: usize, height: usize) -> String {
    let mut line = class.index().to_string();
    for p in polygon.vertices() {
        let _ = write!(line, " {} {}", coord(p.x / width as f64), coord(p.y / height as f64));
    }
    line
}

pub fn parse_label_file(text: &str) -> Result<Vec<LabelLine>, DatasetError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let locus = || format!("label line {}", n + 1);
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let class = fields[0]
            .parse::<usize>()
            .ok()
            .and_then(CellClass::from_index)
            .ok_or_else(|| DatasetError::Parse {
                locus: locus(),
                message: format!("bad class index `{}`", fields[0]),
            })?;
        let values: Vec<f64> = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| DatasetError::Parse {
                locus: locus(),
                message: e.to_string(),
            })?;
        if values.len() < 6 || values.len() % 2 != 0 {
            return Err(DatasetError::Parse {
                locus: locus(),
                message: format!("expected at least 3 coordinate pairs, got {} values", values.len()),
            });
        }
        out.push(LabelLine {
            class,
            points: values.chunks(2).map(|c| Point::new(c[0], c[1])).collect(),
        });
    }
    Ok(out)
}

fn side<'a>(split: &DatasetSplit, id: &str) -> Option<&'a str> {
    if split.train.iter().any(|t| t == id) {
        Some("train")
    } else if split.val.iter().any(|t| t == id) {
        Some("val")
    } else {
        None
    }
}

fn write(path: &Path, contents: &[u8]) -> Result<(), DatasetError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| DatasetError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| DatasetError::io(path, e))
}

/// Writes `labels/{train,val}/<id>.txt` for every sample in the split and a
/// manifest listing the image folders and class names.
pub fn export_training_labels(
    dataset: &[AnnotatedImage],
    split: &DatasetSplit,
    out_dir: &Path,
) -> Result<ExportSummary, DatasetError> {
    let mut summary = ExportSummary::default();
    for sample in dataset {
        let Some(side) = side(split, &sample.id) else {
            summary.skipped += 1;
            continue;
        };
        let mut text = String::new();
        for o in &sample.objects {
            text.push_str(&format_label_line(o.class, &o.polygon, sample.width, sample.height));
            text.push('\n');
        }
        write(&out_dir.join("labels").join(side).join(format!("{}.txt", sample.id)), text.as_bytes())?;
        match side {
            "train" => summary.train_images += 1,
            _ => summary.val_images += 1,
        }
        summary.fibers += sample.count(CellClass::Fiber);
        summary.vessels += sample.count(CellClass::Vessel);
    }
    let root = fs::canonicalize(out_dir).unwrap_or_else(|_| out_dir.to_path_buf());
    let mut manifest = format!(
        "path: {}\ntrain: images/train\nval: images/val\nnc: {}\nnames:\n",
        root.display(),
        CellClass::ALL.len()
    );
    for c in CellClass::ALL {
        let _ = writeln!(manifest, "  {}: {}", c.index(), c.name());
    }
    write(&out_dir.join(MANIFEST_NAME), manifest.as_bytes())?;
    Ok(summary)
}

/// Pixels of a sample given its full source image.
pub fn render_sample(sample: &AnnotatedImage, source: &RgbImage) -> RgbImage {
    let window = sample
        .window
        .unwrap_or_else(|| crate::geometry::PixelRect::new(0, 0, source.width() as usize, source.height() as usize));
    let (cw, ch) = sample.canvas;
    let mut canvas = RgbImage::new(cw as u32, ch as u32);
    let w = window.width.min(cw).min((source.width() as usize).saturating_sub(window.x));
    let h = window.height.min(ch).min((source.height() as usize).saturating_sub(window.y));
    for y in 0..h {
        for x in 0..w {
            canvas.put_pixel(
                x as u32,
                y as u32,
                *source.get_pixel((window.x + x) as u32, (window.y + y) as u32),
            );
        }
    }
    sample.transform.apply_image(&canvas)
}

/// Writes `images/{train,val}/<id>.png`, loading each source image once
/// from `images_dir`. Returns the number of images written.
pub fn export_training_images(
    dataset: &[AnnotatedImage],
    split: &DatasetSplit,
    out_dir: &Path,
    images_dir: &Path,
) -> Result<usize, DatasetError> {
    let mut by_source: BTreeMap<PathBuf, Vec<&AnnotatedImage>> = BTreeMap::new();
    for s in dataset {
        if side(split, &s.id).is_some() {
            by_source.entry(images_dir.join(&s.image_path)).or_default().push(s);
        }
    }
    let written: Vec<Result<usize, DatasetError>> = by_source
        .into_par_iter()
        .map(|(path, samples)| {
            let source = image::open(&path)
                .map_err(|e| DatasetError::Image {
                    path: path.clone(),
                    message: e.to_string(),
                })?
                .to_rgb8();
            for s in &samples {
                let side = side(split, &s.id).expect("filtered above");
                let target = out_dir.join("images").join(side).join(format!("{}.png", s.id));
                if let Some(dir) = target.parent() {
                    fs::create_dir_all(dir).map_err(|e| DatasetError::io(dir, e))?;
                }
                render_sample(s, &source).save(&target).map_err(|e| DatasetError::Image {
                    path: target.clone(),
                    message: e.to_string(),
                })?;
            }
            Ok(samples.len())
        })
        .collect();
    written.into_iter().sum()
}
