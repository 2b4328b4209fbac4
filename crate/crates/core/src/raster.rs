//! Windowed access to large RGB rasters.
//!
//! Stitched slide mosaics easily exceed available memory, so the tiled
//! pipeline only ever asks a [`RasterSource`] for one window at a time.
//! Strip- or tile-organised TIFF/BigTIFF files are decoded chunk by chunk;
//! every other format is decoded fully into memory.

use std::collections::{HashMap, VecDeque};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use image::{DynamicImage, RgbImage};
use tiff::decoder::{ChunkType, Decoder, DecodingResult};
use tiff::tags::{PlanarConfiguration, Tag};
use tiff::ColorType;

use crate::geometry::PixelRect;

#[derive(Debug, thiserror::Error)]
pub enum RasterError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("window {window:?} exceeds image bounds {width}x{height}")]
    OutOfBounds {
        window: PixelRect,
        width: usize,
        height: usize,
    },
    #[error("unsupported pixel layout: {0}")]
    Unsupported(String),
}

/// Read-only random access to an RGB raster.
pub trait RasterSource: Send + Sync {
    fn dimensions(&self) -> (usize, usize);

    fn read_window(&self, window: PixelRect) -> Result<RgbImage, RasterError>;
}

fn check_window(window: &PixelRect, (width, height): (usize, usize)) -> Result<(), RasterError> {
    if window.is_empty() || window.x_end() > width || window.y_end() > height {
        return Err(RasterError::OutOfBounds {
            window: *window,
            width,
            height,
        });
    }
    Ok(())
}

impl RasterSource for RgbImage {
    fn dimensions(&self) -> (usize, usize) {
        (self.width() as usize, self.height() as usize)
    }

    fn read_window(&self, window: PixelRect) -> Result<RgbImage, RasterError> {
        check_window(&window, RasterSource::dimensions(self))?;
        Ok(image::imageops::crop_imm(
            self,
            window.x as u32,
            window.y as u32,
            window.width as u32,
            window.height as u32,
        )
        .to_image())
    }
}

impl<T: RasterSource + ?Sized> RasterSource for Arc<T> {
    fn dimensions(&self) -> (usize, usize) {
        (**self).dimensions()
    }

    fn read_window(&self, window: PixelRect) -> Result<RgbImage, RasterError> {
        (**self).read_window(window)
    }
}

/// Converts any decoded image to 8-bit RGB; grayscale is replicated into
/// all three channels and alpha is dropped.
pub fn to_rgb(image: DynamicImage) -> RgbImage {
    match image {
        DynamicImage::ImageRgb8(rgb) => rgb,
        other => other.to_rgb8(),
    }
}

/// Decodes an in-memory encoded image (PNG, JPEG, TIFF).
pub fn decode_bytes(bytes: &[u8]) -> Result<RgbImage, RasterError> {
    if bytes.is_empty() {
        return Err(RasterError::Decode("empty input".into()));
    }
    image::load_from_memory(bytes)
        .map(to_rgb)
        .map_err(|e| RasterError::Decode(e.to_string()))
}

/// Opens `path` for windowed reading.
pub fn open_raster(path: &Path) -> Result<Box<dyn RasterSource>, RasterError> {
    let is_tiff = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("tif") || e.eq_ignore_ascii_case("tiff"));
    if is_tiff {
        match TiffSource::open(path) {
            Ok(src) => return Ok(Box::new(src)),
            Err(RasterError::Unsupported(reason)) => {
                log::debug!("{}: falling back to full decode ({reason})", path.display());
            }
            Err(e) => return Err(e),
        }
    }
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(source) => RasterError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => RasterError::Decode(other.to_string()),
    })?;
    Ok(Box::new(to_rgb(img)))
}

const CHUNK_CACHE_BYTES: usize = 256 << 20;

struct ChunkCache {
    chunks: HashMap<u32, Arc<Vec<u8>>>,
    order: VecDeque<u32>,
    bytes: usize,
}

impl ChunkCache {
    fn get(&self, index: u32) -> Option<Arc<Vec<u8>>> {
        self.chunks.get(&index).cloned()
    }

    fn insert(&mut self, index: u32, data: Arc<Vec<u8>>) {
        self.bytes += data.len();
        self.chunks.insert(index, data);
        self.order.push_back(index);
        while self.bytes > CHUNK_CACHE_BYTES && self.order.len() > 1 {
            if let Some(old) = self.order.pop_front() {
                if let Some(d) = self.chunks.remove(&old) {
                    self.bytes -= d.len();
                }
            }
        }
    }
}

/// Chunk-wise reader for chunky (interleaved) strip or tiled TIFF files,
/// including BigTIFF.
pub struct TiffSource {
    decoder: Mutex<Decoder<BufReader<File>>>,
    cache: Mutex<ChunkCache>,
    width: usize,
    height: usize,
    chunk_width: usize,
    chunk_height: usize,
    chunks_across: usize,
    channels: usize,
}

impl TiffSource {
    pub fn open(path: &Path) -> Result<Self, RasterError> {
        let file = File::open(path).map_err(|source| RasterError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let tiff_err = |e: tiff::TiffError| RasterError::Decode(e.to_string());
        let mut decoder = Decoder::new(BufReader::new(file))
            .map_err(tiff_err)?
            .with_limits(tiff::decoder::Limits::unlimited());
        let (w, h) = decoder.dimensions().map_err(tiff_err)?;
        let planar = decoder
            .find_tag_unsigned::<u16>(Tag::PlanarConfiguration)
            .map_err(tiff_err)?
            .and_then(PlanarConfiguration::from_u16)
            .unwrap_or(PlanarConfiguration::Chunky);
        if planar != PlanarConfiguration::Chunky {
            return Err(RasterError::Unsupported("planar configuration".into()));
        }
        let (channels, bits) = match decoder.colortype().map_err(tiff_err)? {
            ColorType::Gray(b) => (1, b),
            ColorType::GrayA(b) => (2, b),
            ColorType::RGB(b) => (3, b),
            ColorType::RGBA(b) => (4, b),
            other => return Err(RasterError::Unsupported(format!("{other:?}"))),
        };
        if bits != 8 && bits != 16 {
            return Err(RasterError::Unsupported(format!("{bits}-bit samples")));
        }
        let (cw, ch) = decoder.chunk_dimensions();
        let chunks_across = match decoder.get_chunk_type() {
            ChunkType::Strip => 1,
            ChunkType::Tile => (w as usize).div_ceil(cw as usize),
        };
        Ok(Self {
            decoder: Mutex::new(decoder),
            cache: Mutex::new(ChunkCache {
                chunks: HashMap::new(),
                order: VecDeque::new(),
                bytes: 0,
            }),
            width: w as usize,
            height: h as usize,
            chunk_width: cw as usize,
            chunk_height: ch as usize,
            chunks_across,
            channels,
        })
    }

    /// Decoded chunk as 8-bit samples plus its data width in pixels.
    fn chunk(&self, index: u32) -> Result<(Arc<Vec<u8>>, usize), RasterError> {
        let mut decoder = self.decoder.lock().expect("decoder lock");
        let (data_w, _) = decoder.chunk_data_dimensions(index);
        if let Some(hit) = self.cache.lock().expect("cache lock").get(index) {
            return Ok((hit, data_w as usize));
        }
        let samples = match decoder.read_chunk(index).map_err(|e| RasterError::Decode(e.to_string()))? {
            DecodingResult::U8(v) => v,
            DecodingResult::U16(v) => v.into_iter().map(|s| (s >> 8) as u8).collect(),
            _ => return Err(RasterError::Unsupported("sample format".into())),
        };
        let data = Arc::new(samples);
        self.cache.lock().expect("cache lock").insert(index, data.clone());
        Ok((data, data_w as usize))
    }
}

impl RasterSource for TiffSource {
    fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn read_window(&self, window: PixelRect) -> Result<RgbImage, RasterError> {
        check_window(&window, (self.width, self.height))?;
        let mut out = RgbImage::new(window.width as u32, window.height as u32);
        let cx0 = window.x / self.chunk_width;
        let cx1 = (window.x_end() - 1) / self.chunk_width;
        let cy0 = window.y / self.chunk_height;
        let cy1 = (window.y_end() - 1) / self.chunk_height;
        for cy in cy0..=cy1 {
            for cx in cx0..=cx1.min(self.chunks_across - 1) {
                let index = (cy * self.chunks_across + cx) as u32;
                let (data, data_w) = self.chunk(index)?;
                let (ox, oy) = (cx * self.chunk_width, cy * self.chunk_height);
                let rows = data.len() / (data_w * self.channels);
                let region = PixelRect::new(ox, oy, data_w, rows);
                let Some(r) = region.intersect(&window) else {
                    continue;
                };
                for y in r.y..r.y_end() {
                    for x in r.x..r.x_end() {
                        let i = ((y - oy) * data_w + (x - ox)) * self.channels;
                        let px = match self.channels {
                            1 | 2 => [data[i]; 3],
                            _ => [data[i], data[i + 1], data[i + 2]],
                        };
                        out.put_pixel((x - window.x) as u32, (y - window.y) as u32, image::Rgb(px));
                    }
                }
            }
        }
        Ok(out)
    }
}
