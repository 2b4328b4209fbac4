use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use fiberscope_core::dataset::{
    augment, crop_to_training_tiles, export_training_images, export_training_labels, parse_via_annotations,
    split_grouped, AugmentationSpec, ExportSummary,
};

#[derive(Debug, Clone, Args)]
pub struct PrepareArgs {
    /// Polygon annotation export (JSON).
    #[arg(long)]
    pub annotations: PathBuf,
    /// Directory the annotated image files are relative to.
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Training tile edge; smaller images are padded.
    #[arg(long, default_value_t = 1024)]
    pub tile: usize,
    #[arg(long, default_value_t = 0.85)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub flip_h: bool,
    #[arg(long)]
    pub flip_v: bool,
    /// Clockwise rotation in degrees (90, 180 or 270); may be repeated.
    #[arg(long = "rotate")]
    pub rotations: Vec<u16>,
    /// Rescaling factor; may be repeated.
    #[arg(long = "scale")]
    pub scales: Vec<f64>,
    /// Write labels only.
    #[arg(long)]
    pub no_images: bool,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub samples: usize,
    pub dropped_regions: usize,
    pub summary: ExportSummary,
    pub images_written: usize,
}

pub fn run(args: &PrepareArgs) -> Result<Prepared> {
    let spec = AugmentationSpec {
        horizontal_flip: args.flip_h,
        vertical_flip: args.flip_v,
        rotations: args.rotations.clone(),
        scale_factors: args.scales.clone(),
        seed: args.seed,
    };
    spec.validate()?;
    let text = fs::read_to_string(&args.annotations).with_context(|| format!("reading {}", args.annotations.display()))?;
    let doc = parse_via_annotations(&text)?;
    let mut dropped = doc.dropped_regions;

    let mut samples = Vec::new();
    for mut image in doc.images {
        let path = args.images.join(&image.image_path);
        let (w, h) = image::image_dimensions(&path).with_context(|| format!("reading {}", path.display()))?;
        if (image.width, image.height) != (w as usize, h as usize) {
            dropped += image.set_dimensions(w as usize, h as usize);
        }
        for tile in crop_to_training_tiles(&image, args.tile) {
            let derived = augment(&tile, &spec)?;
            samples.push(tile);
            samples.extend(derived);
        }
    }

    let keys: Vec<(String, String)> = samples.iter().map(|s| (s.id.clone(), s.group.clone())).collect();
    let split = split_grouped(&keys, args.train_frac, args.seed)?;
    let summary = export_training_labels(&samples, &split, &args.out)?;
    let images_written = if args.no_images {
        0
    } else {
        export_training_images(&samples, &split, &args.out, &args.images)?
    };
    println!(
        "{} samples: {} train, {} val; {} fibers, {} vessels",
        samples.len(),
        summary.train_images,
        summary.val_images,
        summary.fibers,
        summary.vessels
    );
    if dropped > 0 {
        eprintln!("warning: {dropped} annotation region(s) dropped");
    }
    println!("written to {}", args.out.display());
    Ok(Prepared {
        samples: samples.len(),
        dropped_regions: dropped,
        summary,
        images_written,
    })
}
