use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use fiberscope_core::geometry::PixelRect;
use fiberscope_core::inference::{resolve_model_path, InferenceParams};
use fiberscope_core::raster::open_raster;
use fiberscope_service::export::{encode_png, render_overlay, write_csv, write_mask_archive};
use fiberscope_service::{analyze, provider_for, AnalysisOutput, DetectorProvider, JobParams};

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Input image (PNG, JPEG or TIFF/BigTIFF); may be repeated.
    #[arg(long = "image", required = true)]
    pub images: Vec<PathBuf>,
    /// ONNX segmentation model; defaults to $FIBERSCOPE_MODEL.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Run the model-free dark-component detector instead of a model.
    #[arg(long, conflicts_with = "model")]
    pub no_model: bool,
    /// Output directory; each image gets `<out>/<stem>/`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Parameter preset (`default` or `f1-optimal`), applied before the
    /// individual flags.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub tile: Option<usize>,
    #[arg(long)]
    pub overlap: Option<usize>,
    /// Minimum detection confidence.
    #[arg(long)]
    pub conf: Option<f64>,
    /// IoU threshold of per-tile non-maximum suppression.
    #[arg(long)]
    pub nms: Option<f64>,
    #[arg(long)]
    pub mask_threshold: Option<f64>,
    /// IoU above which detections from overlapping tiles are merged.
    #[arg(long)]
    pub dedup_iou: Option<f64>,
    /// Drop objects within this many pixels of the image edge.
    #[arg(long)]
    pub border_margin: Option<usize>,
    /// Micrometres per pixel.
    #[arg(long)]
    pub px_um: Option<f64>,
    /// Skip the per-object mask archive.
    #[arg(long)]
    pub no_masks: bool,
    /// Also write overlay.png with detections at or above this confidence.
    #[arg(long)]
    pub overlay: Option<f64>,
}

impl AnalyzeArgs {
    pub fn params(&self) -> Result<JobParams> {
        let mut p = JobParams::default();
        if let Some(name) = &self.preset {
            p.inference = InferenceParams::preset(name).with_context(|| format!("unknown preset `{name}`"))?;
        }
        if let Some(v) = self.tile {
            p.tile_size = v;
        }
        if let Some(v) = self.overlap {
            p.overlap = v;
        }
        if let Some(v) = self.conf {
            p.inference.conf_threshold = v;
        }
        if let Some(v) = self.nms {
            p.inference.iou_threshold = v;
        }
        if let Some(v) = self.mask_threshold {
            p.inference.mask_threshold = v;
        }
        if let Some(v) = self.dedup_iou {
            p.dedup_iou = v;
        }
        if let Some(v) = self.border_margin {
            p.border_margin = v;
        }
        if let Some(v) = self.px_um {
            p.microns_per_pixel = v;
        }
        p.validate().map_err(anyhow::Error::msg)?;
        Ok(p)
    }

    pub fn provider(&self) -> Result<Arc<dyn DetectorProvider>> {
        let model = if self.no_model {
            None
        } else {
            match resolve_model_path(self.model.as_deref()) {
                Some(p) => Some(p),
                None => bail!("no model given: pass --model, set FIBERSCOPE_MODEL, or use --no-model"),
            }
        };
        Ok(provider_for(model.as_deref())?)
    }
}

/// Files written for one analysed image.
#[derive(Debug, Clone)]
pub struct Written {
    pub dir: PathBuf,
    pub output: AnalysisOutput,
    pub seconds: f64,
}

pub fn analyze_one(provider: &dyn DetectorProvider, image: &Path, params: &JobParams, args: &AnalyzeArgs) -> Result<Written> {
    let started = Instant::now();
    let source = open_raster(image).with_context(|| format!("opening {}", image.display()))?;
    let detector = provider.detector(params).map_err(anyhow::Error::msg)?;
    let output = analyze(detector.as_ref(), source.as_ref(), params).with_context(|| format!("analysing {}", image.display()))?;
    let seconds = started.elapsed().as_secs_f64();

    let stem = image.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    let dir = args.out.join(stem);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("results.json"), serde_json::to_vec(&output)?)?;
    write_csv(&output, BufWriter::new(fs::File::create(dir.join("results.csv"))?))?;
    if !args.no_masks {
        let f = BufWriter::new(fs::File::create(dir.join("masks.zip"))?);
        write_mask_archive(&output, f)?;
    }
    if let Some(cutoff) = args.overlay {
        let (w, h) = source.dimensions();
        let mut img = source.read_window(PixelRect::new(0, 0, w, h))?;
        render_overlay(&mut img, &output, cutoff);
        fs::write(dir.join("overlay.png"), encode_png(&img)?)?;
    }
    Ok(Written { dir, output, seconds })
}

pub fn run(args: &AnalyzeArgs) -> Result<()> {
    let params = args.params()?;
    let provider = args.provider()?;
    eprintln!("detector: {}", provider.describe());
    for image in &args.images {
        let w = analyze_one(provider.as_ref(), image, &params, args)?;
        let m = &w.output.merged;
        println!("{}", image.display());
        println!(
            "  {}x{} px, {} tile(s), {:.2} s ({:.1} ms/tile)",
            m.image_size.0,
            m.image_size.1,
            m.tiles,
            w.seconds,
            1000.0 * w.seconds / m.tiles.max(1) as f64
        );
        println!(
            "  duplicates merged {}, border objects removed {}, cut objects stitched {}",
            m.duplicates_removed, m.border_excluded, m.stitched
        );
        for (class, s) in w.output.class_summaries() {
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.1}"));
            println!(
                "  {:<7} n={:<6} mean length {} um, width {} um, area {} um2",
                class.name(),
                s.count,
                fmt(s.mean_length_um),
                fmt(s.mean_width_um),
                fmt(s.mean_area_um2)
            );
        }
        for warning in &w.output.warnings {
            eprintln!("warning: {}: {warning}", image.display());
        }
        println!("  results in {}", w.dir.display());
    }
    Ok(())
}
