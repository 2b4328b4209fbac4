//! Job exports: measurement CSV, per-object mask archive and overlay image.

use std::io::{Seek, Write};

use fiberscope_core::inference::Detection;
use fiberscope_core::morphometry::MorphometryRecord;
use fiberscope_core::CellClass;
use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipWriter};

use crate::analysis::AnalysisOutput;

pub const CSV_HEADER: [&str; 13] = [
    "object_id",
    "class",
    "length_um",
    "width_um",
    "area_um2",
    "length_px",
    "width_px",
    "area_px2",
    "confidence",
    "x0",
    "y0",
    "x1",
    "y1",
];

pub const MASK_MANIFEST: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("zip: {0}")]
    Zip(#[from] zip::result::ZipError),
    #[error("png: {0}")]
    Png(#[from] png::EncodingError),
}

/// Rows in export order: confidence descending, then object id.
pub fn ordered_records(output: &AnalysisOutput) -> Vec<&MorphometryRecord> {
    let mut rows: Vec<&MorphometryRecord> = output.records.iter().collect();
    rows.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then(a.object_id.cmp(&b.object_id)));
    rows
}

/// Measurement table. Micrometre and pixel fields carry 3 decimals;
/// confidence is written at full precision so client-side cutoffs agree
/// with the server.
pub fn write_csv<W: Write>(output: &AnalysisOutput, out: W) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in ordered_records(output) {
        let b = output.detection(r.object_id).map(|d| d.bbox);
        let (x0, y0, x1, y1) = b.map_or((0.0, 0.0, 0.0, 0.0), |b| (b.x0, b.y0, b.x1, b.y1));
        w.write_record([
            r.object_id.to_string(),
            r.class.to_string(),
            format!("{:.3}", r.length_um),
            format!("{:.3}", r.width_um),
            format!("{:.3}", r.area_um2),
            format!("{:.3}", r.length_px),
            format!("{:.3}", r.width_px),
            format!("{:.3}", r.area_px2),
            r.confidence.to_string(),
            format!("{x0:.3}"),
            format!("{y0:.3}"),
            format!("{x1:.3}"),
            format!("{y1:.3}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_bytes(output: &AnalysisOutput) -> Result<Vec<u8>, ExportError> {
    let mut buf = Vec::new();
    write_csv(output, &mut buf)?;
    Ok(buf)
}

pub fn mask_file_name(object_id: u64, class: CellClass) -> String {
    format!("{object_id}_{class}.png")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskManifest {
    pub width: usize,
    pub height: usize,
    pub objects: Vec<MaskEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub object_id: u64,
    pub class: CellClass,
    pub confidence: f64,
    pub file: String,
}

/// Writes a full-frame 8-bit grayscale PNG (0 background, 255 foreground)
/// row by row, so gigapixel frames never exist in memory.
pub fn write_mask_png<W: Write>(d: &Detection, (width, height): (usize, usize), out: W) -> Result<(), ExportError> {
    let mut enc = png::Encoder::new(out, width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_compression(png::Compression::Fast);
    let mut writer = enc.write_header()?;
    let mut stream = writer.stream_writer()?;
    let rect = d.mask.rect();
    let zeros = vec![0u8; width];
    let mut row = vec![0u8; width];
    for y in 0..height {
        if y < rect.y || y >= rect.y_end() {
            stream.write_all(&zeros)?;
            continue;
        }
        row.fill(0);
        for x in rect.x..rect.x_end().min(width) {
            if d.mask.mask.get(x - rect.x, y - rect.y) {
                row[x] = 255;
            }
        }
        stream.write_all(&row)?;
    }
    stream.finish()?;
    Ok(())
}

/// Zip of `<object_id>_<class>.png` per detection plus a manifest. Entries
/// are stored uncompressed (PNG already is) with a fixed timestamp, so the
/// archive is a pure function of the job results.
pub fn write_mask_archive<W: Write + Seek>(output: &AnalysisOutput, out: W) -> Result<W, ExportError> {
    let mut zip = ZipWriter::new(out);
    let opts = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Stored)
        .last_modified_time(DateTime::default())
        .large_file(true);
    let (width, height) = output.merged.image_size;
    let mut manifest = MaskManifest {
        width,
        height,
        objects: Vec::with_capacity(output.records.len()),
    };
    for (r, d) in output.records.iter().zip(&output.merged.detections) {
        let file = mask_file_name(r.object_id, r.class);
        zip.start_file(file.as_str(), opts)?;
        write_mask_png(d, (width, height), &mut zip)?;
        manifest.objects.push(MaskEntry {
            object_id: r.object_id,
            class: r.class,
            confidence: r.confidence,
            file,
        });
    }
    zip.start_file(MASK_MANIFEST, opts)?;
    zip.write_all(&serde_json::to_vec_pretty(&manifest).expect("manifest serializes"))?;
    Ok(zip.finish()?)
}

pub fn class_color(class: CellClass) -> [u8; 3] {
    match class {
        CellClass::Fiber => [255, 196, 0],
        CellClass::Vessel => [0, 150, 255],
    }
}

const FILL_ALPHA: f32 = 0.35;

/// Draws detections with confidence >= `cutoff` onto `image`: translucent
/// class-colored fill and an opaque outline. A cutoff of 1 or more draws
/// nothing. Lower-confidence objects are drawn first so stronger ones end up
/// on top.
pub fn render_overlay(image: &mut RgbImage, output: &AnalysisOutput, cutoff: f64) {
    if cutoff >= 1.0 {
        return;
    }
    let (w, h) = (image.width() as usize, image.height() as usize);
    let mut order: Vec<&Detection> = output
        .merged
        .detections
        .iter()
        .filter(|d| d.confidence >= cutoff)
        .collect();
    order.sort_by(|a, b| a.confidence.total_cmp(&b.confidence));
    for d in order {
        let color = class_color(d.class);
        let m = &d.mask;
        for (x, y) in m.foreground() {
            if x >= w || y >= h {
                continue;
            }
            let edge = x == 0
                || y == 0
                || !m.get(x - 1, y)
                || !m.get(x + 1, y)
                || !m.get(x, y - 1)
                || !m.get(x, y + 1);
            let p = image.get_pixel_mut(x as u32, y as u32);
            *p = if edge { Rgb(color) } else { blend(p.0, color) };
        }
    }
}

fn blend(base: [u8; 3], color: [u8; 3]) -> Rgb<u8> {
    Rgb(std::array::from_fn(|i| {
        (base[i] as f32 * (1.0 - FILL_ALPHA) + color[i] as f32 * FILL_ALPHA).round() as u8
    }))
}

pub fn encode_png(image: &RgbImage) -> Result<Vec<u8>, ExportError> {
    let mut buf = Vec::new();
    let mut enc = png::Encoder::new(&mut buf, image.width(), image.height());
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_compression(png::Compression::Fast);
    let mut writer = enc.write_header()?;
    writer.write_image_data(image.as_raw())?;
    writer.finish()?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fiberscope_core::geometry::{extract_contour, BinaryMask, BoundingBox, PlacedMask};
    use fiberscope_core::pipeline::MergedDetectionSet;

    fn det(class: CellClass, conf: f64, x: usize, y: usize, w: usize, h: usize) -> Detection {
        let mask = PlacedMask::new(x, y, BinaryMask::from_fn(w, h, |_, _| true).unwrap());
        let contour = extract_contour(&mask.mask).unwrap().translate(x as f64, y as f64);
        Detection {
            class,
            confidence: conf,
            bbox: BoundingBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64).unwrap(),
            mask,
            contour,
        }
    }

    fn output(dets: Vec<Detection>, size: (usize, usize)) -> AnalysisOutput {
        let records = dets
            .iter()
            .enumerate()
            .map(|(i, d)| MorphometryRecord {
                object_id: i as u64 + 1,
                class: d.class,
                length_px: 10.0,
                width_px: 2.0,
                area_px2: d.area() as f64,
                length_um: 6.5,
                width_um: 1.3,
                area_um2: d.area() as f64 * 0.4225,
                confidence: d.confidence,
                euclidean_length_px: None,
            })
            .collect();
        AnalysisOutput {
            merged: MergedDetectionSet {
                image_size: size,
                provenance: vec![vec![0]; dets.len()],
                detections: dets,
                duplicates_removed: 0,
                border_excluded: 0,
                tiles: 1,
                stitched: 0,
            },
            records,
            warnings: vec![],
        }
    }

    #[test]
    fn csv_header_only_when_empty() {
        let s = String::from_utf8(csv_bytes(&output(vec![], (10, 10))).unwrap()).unwrap();
        assert_eq!(s, format!("{}\n", CSV_HEADER.join(",")));
    }

    #[test]
    fn csv_rows_ordered_and_formatted() {
        let out = output(
            vec![
                det(CellClass::Fiber, 0.5, 0, 0, 4, 4),
                det(CellClass::Vessel, 0.9, 5, 5, 4, 4),
                det(CellClass::Fiber, 0.5, 1, 1, 2, 2),
            ],
            (20, 20),
        );
        let text = String::from_utf8(csv_bytes(&out).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "2,vessel,6.500,1.300,6.760,10.000,2.000,16.000,0.9,5.000,5.000,9.000,9.000");
        assert!(lines[2].starts_with("1,fiber,"));
        assert!(lines[3].starts_with("3,fiber,"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn mask_png_round_trips() {
        let d = det(CellClass::Fiber, 0.7, 3, 2, 5, 4);
        let mut buf = Vec::new();
        write_mask_png(&d, (12, 9), &mut buf).unwrap();
        let img = image::load_from_memory(&buf).unwrap();
        assert!(matches!(img, image::DynamicImage::ImageLuma8(_)));
        let g = img.to_luma8();
        assert_eq!(g.dimensions(), (12, 9));
        for (x, y, p) in g.enumerate_pixels() {
            assert_eq!(p.0[0], if d.mask.get(x as usize, y as usize) { 255 } else { 0 });
        }
    }

    #[test]
    fn overlay_cutoff_filters() {
        let base = RgbImage::from_pixel(20, 20, Rgb([10, 10, 10]));
        let out = output(
            vec![det(CellClass::Fiber, 0.8, 1, 1, 6, 6), det(CellClass::Vessel, 0.3, 10, 10, 6, 6)],
            (20, 20),
        );
        let draw = |c: f64| {
            let mut img = base.clone();
            render_overlay(&mut img, &out, c);
            img
        };
        assert_eq!(draw(1.0), base);
        let all = draw(0.0);
        assert_eq!(all.get_pixel(1, 1).0, class_color(CellClass::Fiber));
        assert_eq!(all.get_pixel(10, 10).0, class_color(CellClass::Vessel));
        assert_ne!(all.get_pixel(3, 3).0, [10, 10, 10]);
        let high = draw(0.5);
        assert_eq!(high.get_pixel(12, 12).0, [10, 10, 10]);
        assert_eq!(high.get_pixel(3, 3), all.get_pixel(3, 3));
        assert_eq!(draw(0.8).get_pixel(1, 1).0, class_color(CellClass::Fiber));
    }

    proptest::proptest! {
        #[test]
        fn csv_rows_match_detections_and_overlay_is_monotone(
            objs in proptest::collection::vec((0usize..2, 0.0f64..1.0, 0usize..30, 0usize..30, 1usize..10, 1usize..10), 0..12),
            c1 in 0.0f64..1.0,
            c2 in 0.0f64..1.0,
        ) {
            let dets: Vec<Detection> = objs
                .iter()
                .map(|&(k, conf, x, y, w, h)| det(CellClass::from_index(k).unwrap(), conf, x, y, w, h))
                .collect();
            let out = output(dets, (40, 40));
            let text = String::from_utf8(csv_bytes(&out).unwrap()).unwrap();
            proptest::prop_assert_eq!(text.lines().count(), out.detection_count() + 1);
            let mut ids: Vec<u64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
            ids.sort();
            proptest::prop_assert_eq!(ids, (1..=out.detection_count() as u64).collect::<Vec<_>>());

            let base = RgbImage::from_pixel(40, 40, Rgb([1, 2, 3]));
            let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
            let mut a = base.clone();
            render_overlay(&mut a, &out, lo);
            let mut b = base.clone();
            render_overlay(&mut b, &out, hi);
            let changed = |img: &RgbImage| img.pixels().zip(base.pixels()).filter(|(p, q)| p != q).count();
            proptest::prop_assert!(changed(&b) <= changed(&a));
        }
    }
}
