use serde_json::{Map, Value};

use super::{AnnotatedImage, AnnotatedObject, DatasetError};
use crate::geometry::{Point, Polygon};
use crate::CellClass;

/// Parsed annotation document.
#[derive(Debug, Clone, PartialEq)]
pub struct ViaDocument {
    /// One entry per annotated file, in key order of the document.
    pub images: Vec<AnnotatedImage>,
    /// Regions skipped because they had fewer than 3 usable vertices or an
    /// unsupported shape.
    pub dropped_regions: usize,
}

impl ViaDocument {
    pub fn count(&self, class: CellClass) -> usize {
        self.images.iter().map(|i| i.count(class)).sum()
    }
}

const CLASS_KEYS: [&str; 6] = ["class", "label", "type", "name", "category", "cell"];

/// Parses a polygon-region annotation export.
///
/// Accepts the plain export (an object keyed by file entry), the project
/// layout that nests it under `_via_img_metadata`, and the older layout with
/// `regions` as an object. Image sizes are taken from `width`/`height` file
/// attributes when present and are otherwise left at 0 until
/// [`AnnotatedImage::set_dimensions`] is called.
pub fn parse_via_annotations(document: &str) -> Result<ViaDocument, DatasetError> {
    let root: Value = serde_json::from_str(document).map_err(|e| DatasetError::Parse {
        locus: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let root = root.as_object().ok_or_else(|| parse_err("document", "expected an object"))?;
    let entries = match root.get("_via_img_metadata") {
        Some(v) => v
            .as_object()
            .ok_or_else(|| parse_err("_via_img_metadata", "expected an object"))?,
        None => root,
    };
    let mut images = Vec::new();
    let mut dropped = 0;
    let mut used_ids = std::collections::HashSet::new();
    for (key, entry) in entries {
        if key.starts_with("_via") {
            continue;
        }
        let entry = entry.as_object().ok_or_else(|| parse_err(key, "expected an object"))?;
        let filename = entry
            .get("filename")
            .and_then(Value::as_str)
            .ok_or_else(|| parse_err(key, "missing `filename`"))?;
        let mut id = sample_id(filename);
        let mut n = 1;
        while !used_ids.insert(id.clone()) {
            n += 1;
            id = format!("{}_{n}", sample_id(filename));
        }
        let (width, height) = file_size(entry.get("file_attributes"));
        let mut image = AnnotatedImage::new(id, filename, width, height);
        let regions: Vec<&Value> = match entry.get("regions") {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(a)) => a.iter().collect(),
            Some(Value::Object(o)) => o.values().collect(),
            Some(_) => return Err(parse_err(filename, "`regions` must be a list")),
        };
        for (r, region) in regions.into_iter().enumerate() {
            let locus = format!("{filename}, region {r}");
            let region = region.as_object().ok_or_else(|| parse_err(&locus, "expected an object"))?;
            let shape = region
                .get("shape_attributes")
                .and_then(Value::as_object)
                .ok_or_else(|| parse_err(&locus, "missing `shape_attributes`"))?;
            let class = region_class(region.get("region_attributes")).map_err(|label| DatasetError::UnknownClass {
                file: filename.to_string(),
                region: r,
                label,
            })?;
            match shape_polygon(shape, &locus)? {
                Some(polygon) => image.objects.push(AnnotatedObject { class, polygon }),
                None => dropped += 1,
            }
        }
        if width > 0 && height > 0 {
            image.set_dimensions(width, height);
        }
        images.push(image);
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} regions with fewer than 3 vertices or unsupported shapes");
    }
    Ok(ViaDocument {
        images,
        dropped_regions: dropped,
    })
}

fn parse_err(locus: &str, message: &str) -> DatasetError {
    DatasetError::Parse {
        locus: locus.to_string(),
        message: message.to_string(),
    }
}

fn sample_id(filename: &str) -> String {
    let stem = std::path::Path::new(filename)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(filename);
    let id: String = stem
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    if id.is_empty() {
        "image".to_string()
    } else {
        id
    }
}

fn file_size(attrs: Option<&Value>) -> (usize, usize) {
    let get = |k: &str| {
        attrs
            .and_then(|a| a.get(k))
            .and_then(|v| v.as_u64().or_else(|| v.as_str().and_then(|s| s.trim().parse().ok())))
            .unwrap_or(0) as usize
    };
    (get("width"), get("height"))
}

/// Class label of a region; `Err` carries the offending label text.
fn region_class(attrs: Option<&Value>) -> Result<CellClass, String> {
    let Some(attrs) = attrs.and_then(Value::as_object) else {
        return Err(String::new());
    };
    let value = CLASS_KEYS
        .iter()
        .find_map(|k| attrs.iter().find(|(key, _)| key.eq_ignore_ascii_case(k)).map(|(_, v)| v))
        .or_else(|| (attrs.len() == 1).then(|| attrs.values().next()).flatten());
    let label = match value {
        Some(Value::String(s)) => s.clone(),
        // Checkbox attributes: {"fiber": true}.
        Some(Value::Object(o)) => checked_key(o).unwrap_or_default(),
        Some(other) => other.to_string(),
        None => String::new(),
    };
    label.parse().map_err(|_| label)
}

fn checked_key(o: &Map<String, Value>) -> Option<String> {
    let mut on = o.iter().filter(|(_, v)| v.as_bool() == Some(true));
    let first = on.next()?;
    on.next().is_none().then(|| first.0.clone())
}

fn numbers(shape: &Map<String, Value>, key: &str, locus: &str) -> Result<Vec<f64>, DatasetError> {
    match shape.get(key) {
        None => Ok(Vec::new()),
        Some(Value::Array(a)) => a
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| parse_err(locus, &format!("non-numeric value in `{key}`"))))
            .collect(),
        Some(_) => Err(parse_err(locus, &format!("`{key}` must be a list"))),
    }
}

fn shape_polygon(shape: &Map<String, Value>, locus: &str) -> Result<Option<Polygon>, DatasetError> {
    let name = shape.get("name").and_then(Value::as_str).unwrap_or("polygon");
    match name {
        "polygon" | "polyline" => {
            let xs = numbers(shape, "all_points_x", locus)?;
            let ys = numbers(shape, "all_points_y", locus)?;
            if xs.len() != ys.len() {
                return Err(parse_err(
                    locus,
                    &format!("{} x values but {} y values", xs.len(), ys.len()),
                ));
            }
            Ok(Polygon::new(xs.into_iter().zip(ys).map(|(x, y)| Point::new(x, y))).ok())
        }
        "rect" => {
            let get = |k: &str| shape.get(k).and_then(Value::as_f64);
            match (get("x"), get("y"), get("width"), get("height")) {
                (Some(x), Some(y), Some(w), Some(h)) => Ok(Polygon::rect(x, y, x + w, y + h).ok()),
                _ => Err(parse_err(locus, "rect needs x, y, width and height")),
            }
        }
        _ => Ok(None),
    }
}
