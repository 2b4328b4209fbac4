use super::{child_id, AnnotatedImage, AnnotatedObject, Transform};
use crate::geometry::PixelRect;

/// Clipped outlines keeping less than this fraction of their area are
/// dropped from a tile.
pub const MIN_KEPT_FRACTION: f64 = 0.1;

/// Non-overlapping origins along one axis; the last tile is moved back to
/// end at the image edge.
pub fn training_tile_origins(len: usize, tile: usize) -> Vec<usize> {
    if len <= tile {
        return vec![0];
    }
    let n = len.div_ceil(tile);
    (0..n).map(|k| (k * tile).min(len - tile)).collect()
}

/// Splits an image into `tile x tile` training crops. Images smaller than a
/// tile give one crop that is padded when rendered.
///
/// Expects an untransformed image (crop before augmenting). Returns nothing
/// when the image size is unknown.
pub fn crop_to_training_tiles(image: &AnnotatedImage, tile: usize) -> Vec<AnnotatedImage> {
    debug_assert_eq!(image.transform, Transform::Identity);
    if image.width == 0 || image.height == 0 || tile == 0 {
        return Vec::new();
    }
    let (ox, oy) = image.window.map_or((0, 0), |w| (w.x, w.y));
    let xs = training_tile_origins(image.width, tile);
    let ys = training_tile_origins(image.height, tile);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for (row, &y) in ys.iter().enumerate() {
        for (col, &x) in xs.iter().enumerate() {
            let w = tile.min(image.width - x);
            let h = tile.min(image.height - y);
            let (fx, fy) = (x as f64, y as f64);
            let objects = image
                .objects
                .iter()
                .filter_map(|o| {
                    let clipped = o.polygon.clip_to_rect(fx, fy, fx + w as f64, fy + h as f64)?;
                    (clipped.area() >= MIN_KEPT_FRACTION * o.polygon.area()).then(|| AnnotatedObject {
                        class: o.class,
                        polygon: clipped.translate(-fx, -fy),
                    })
                })
                .collect();
            out.push(AnnotatedImage {
                id: child_id(&image.id, &format!("t{col}_{row}")),
                group: image.group.clone(),
                image_path: image.image_path.clone(),
                width: tile,
                height: tile,
                window: Some(PixelRect::new(ox + x, oy + y, w, h)),
                canvas: (tile, tile),
                transform: Transform::Identity,
                objects,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rasterize, Polygon};
    use crate::CellClass;

    fn image_with(objects: Vec<Polygon>, w: usize, h: usize) -> AnnotatedImage {
        let mut img = AnnotatedImage::new("img", "img.png", w, h);
        img.objects = objects
            .into_iter()
            .map(|polygon| AnnotatedObject {
                class: CellClass::Fiber,
                polygon,
            })
            .collect();
        img
    }

    #[test]
    fn camera_frame_origins() {
        let tiles = crop_to_training_tiles(&image_with(vec![], 1920, 1440), 1024);
        let origins: Vec<(usize, usize)> = tiles.iter().map(|t| (t.window.unwrap().x, t.window.unwrap().y)).collect();
        assert_eq!(origins, vec![(0, 0), (896, 0), (0, 416), (896, 416)]);
        assert!(tiles.iter().all(|t| t.group == "img"));
    }

    #[test]
    fn interior_object_in_one_tile() {
        let sq = Polygon::rect(100.0, 100.0, 200.0, 150.0).unwrap();
        let tiles = crop_to_training_tiles(&image_with(vec![sq], 1920, 1440), 1024);
        let holding: Vec<_> = tiles.iter().filter(|t| !t.objects.is_empty()).collect();
        assert_eq!(holding.len(), 1);
        assert_eq!(holding[0].id, "img_t0_0");
        assert_eq!(holding[0].objects[0].polygon.area(), 5000.0);
    }

    #[test]
    fn straddling_object_split_by_area() {
        // 2048 wide: tiles at 0 and 1024; object spans x 964..1064, 60 px left
        // of the seam and 40 px right.
        let obj = Polygon::rect(964.0, 100.0, 1064.0, 120.0).unwrap();
        let img = image_with(vec![obj.clone()], 2048, 1024);
        let tiles = crop_to_training_tiles(&img, 1024);
        assert_eq!(tiles.len(), 2);
        let full = rasterize(&obj, 2048, 1024).unwrap().count() as f64;
        for (t, expected) in tiles.iter().zip([0.6, 0.4]) {
            assert_eq!(t.objects.len(), 1);
            let part = rasterize(&t.objects[0].polygon, 1024, 1024).unwrap().count() as f64;
            assert!((part / full - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn slivers_are_dropped() {
        // 5% of the object falls into the second tile.
        let obj = Polygon::rect(924.0, 100.0, 1029.0, 120.0).unwrap();
        let tiles = crop_to_training_tiles(&image_with(vec![obj], 2048, 1024), 1024);
        assert_eq!(tiles[0].objects.len(), 1);
        assert!(tiles[1].objects.is_empty());
    }

    #[test]
    fn small_image_single_padded_tile() {
        let tiles = crop_to_training_tiles(&image_with(vec![], 500, 300), 1024);
        assert_eq!(tiles.len(), 1);
        assert_eq!((tiles[0].width, tiles[0].height), (1024, 1024));
        assert_eq!(tiles[0].window, Some(PixelRect::new(0, 0, 500, 300)));
    }

    #[test]
    fn origins_cover_without_gaps() {
        for len in [1, 1023, 1024, 1025, 3000, 4096] {
            let o = training_tile_origins(len, 1024);
            assert_eq!(o[0], 0);
            assert_eq!(*o.last().unwrap() + 1024.min(len), len);
            for p in o.windows(2) {
                assert!(p[1] - p[0] <= 1024);
            }
        }
    }
}
