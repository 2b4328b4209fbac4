use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use fiberscope_core::dataset::{parse_via_annotations, AnnotatedImage};
use fiberscope_core::evaluation::{evaluate, EvalImage, EvaluationReport, GroundTruth, MatchMode};
use fiberscope_core::geometry::rasterize_placed;
use fiberscope_service::AnalysisOutput;

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Directory of analysis results: `<stem>/results.json` (as written by
    /// `analyze`) or `<stem>.json`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Polygon annotation export for the same images.
    #[arg(long)]
    pub truth: PathBuf,
    /// `mask` or `box` IoU.
    #[arg(long, default_value = "mask")]
    pub mode: MatchMode,
    /// Write the full report as JSON here.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write `pr_curve.txt` and `f1_curve.txt` into this directory.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

fn stem(name: &str) -> String {
    Path::new(name)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(name)
        .to_string()
}

/// Prediction files under `dir`, keyed by image stem.
pub fn load_predictions(dir: &Path) -> Result<BTreeMap<String, AnalysisOutput>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let (key, file) = if path.is_dir() {
            let f = path.join("results.json");
            if !f.is_file() {
                continue;
            }
            (path.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string(), f)
        } else if path.extension().is_some_and(|e| e == "json") {
            (stem(path.file_name().and_then(|s| s.to_str()).unwrap_or_default()), path.clone())
        } else {
            continue;
        };
        let text = fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
        let output: AnalysisOutput =
            serde_json::from_slice(&text).with_context(|| format!("parsing {}", file.display()))?;
        out.insert(key, output);
    }
    Ok(out)
}

/// Rasterizes annotated outlines at `size`.
pub fn ground_truth(image: &AnnotatedImage, size: (usize, usize)) -> Vec<GroundTruth> {
    image
        .objects
        .iter()
        .filter_map(|o| {
            Some(GroundTruth {
                class: o.class,
                mask: rasterize_placed(&o.polygon, size.0, size.1)?,
            })
        })
        .collect()
}

/// Pairs annotated images with predictions by file stem. Annotated images
/// without predictions count as all-missed; predictions without
/// annotations are reported and ignored.
pub fn pair(truth: &[AnnotatedImage], mut preds: BTreeMap<String, AnalysisOutput>) -> Result<(Vec<EvalImage>, Vec<String>)> {
    let mut images = Vec::new();
    let mut notes = Vec::new();
    for t in truth {
        let key = stem(&t.image_path.to_string_lossy());
        let (predictions, size) = match preds.remove(&key) {
            Some(p) => {
                let size = p.merged.image_size;
                if t.width > 0 && (t.width, t.height) != size {
                    bail!(
                        "{key}: annotations are for {}x{} but predictions for {}x{}",
                        t.width,
                        t.height,
                        size.0,
                        size.1
                    );
                }
                (p.merged.detections, size)
            }
            None => {
                notes.push(format!("{key}: no predictions, all objects count as missed"));
                (Vec::new(), (t.width.max(1), t.height.max(1)))
            }
        };
        images.push(EvalImage {
            predictions,
            truth: ground_truth(t, size),
        });
    }
    for k in preds.keys() {
        notes.push(format!("{k}: predictions without annotations ignored"));
    }
    Ok((images, notes))
}

pub fn run(args: &EvalArgs) -> Result<EvaluationReport> {
    let doc = fs::read_to_string(&args.truth).with_context(|| format!("reading {}", args.truth.display()))?;
    let truth = parse_via_annotations(&doc)?;
    let preds = load_predictions(&args.pred)?;
    let (images, notes) = pair(&truth.images, preds)?;
    let mut report = evaluate(&images, args.mode);
    report.notices.extend(notes);
    if truth.dropped_regions > 0 {
        report
            .notices
            .push(format!("{} annotation region(s) with unusable outlines dropped", truth.dropped_regions));
    }
    print!("{}", report.summary());
    println!("images: {}", images.len());
    if let Some(path) = &args.json {
        fs::write(path, serde_json::to_vec_pretty(&report)?).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(dir) = &args.curves {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("pr_curve.txt"), report.pr_table())?;
        fs::write(dir.join("f1_curve.txt"), report.f1_table())?;
    }
    Ok(report)
}
