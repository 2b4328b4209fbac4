use fiberscope_core::inference::{Detection, TileDetector};
use fiberscope_core::morphometry::{measure, MorphometryRecord};
use fiberscope_core::pipeline::{plan_tiles, run_tiled, MergedDetectionSet, PipelineError};
use fiberscope_core::raster::RasterSource;
use fiberscope_core::CellClass;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::job::JobParams;

pub const SMALL_IMAGE_WARNING: &str = "image smaller than tile";

/// Everything a finished job keeps (`results.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOutput {
    pub merged: MergedDetectionSet,
    /// One record per detection, `records[i]` belongs to `merged.detections[i]`
    /// and has object id `i + 1`.
    pub records: Vec<MorphometryRecord>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub count: usize,
    pub mean_length_um: Option<f64>,
    pub mean_width_um: Option<f64>,
    pub mean_area_um2: Option<f64>,
}

impl AnalysisOutput {
    pub fn detection_count(&self) -> usize {
        self.merged.detections.len()
    }

    pub fn detection(&self, object_id: u64) -> Option<&Detection> {
        self.merged.detections.get((object_id as usize).checked_sub(1)?)
    }

    /// Counts and mean measurements for each class, in class-index order.
    pub fn class_summaries(&self) -> Vec<(CellClass, ClassSummary)> {
        CellClass::ALL
            .iter()
            .map(|&class| {
                let rows: Vec<&MorphometryRecord> = self.records.iter().filter(|r| r.class == class).collect();
                let mean = |f: fn(&MorphometryRecord) -> f64| {
                    (!rows.is_empty()).then(|| rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64)
                };
                (
                    class,
                    ClassSummary {
                        count: rows.len(),
                        mean_length_um: mean(|r| r.length_um),
                        mean_width_um: mean(|r| r.width_um),
                        mean_area_um2: mean(|r| r.area_um2),
                    },
                )
            })
            .collect()
    }
}

/// Tiles, detects, merges and measures one image.
///
/// Detections that cannot be measured (fewer than the minimum pixel count)
/// are dropped with a warning, so every kept detection has exactly one
/// record. Object ids are assigned 1..n in merged order.
pub fn analyze(
    detector: &dyn TileDetector,
    source: &dyn RasterSource,
    params: &JobParams,
) -> Result<AnalysisOutput, PipelineError> {
    let grid = plan_tiles(source.dimensions(), params.tile_size, params.overlap)?;
    let mut warnings = Vec::new();
    if grid.image_smaller_than_tile() {
        warnings.push(SMALL_IMAGE_WARNING.to_string());
    }
    let mut merged = run_tiled(detector, source, &grid, &params.merge())?;
    if grid.len() > 1 {
        warnings.extend(merged.overlap_warning(params.overlap));
    }

    let calibration = params.calibration();
    let measured: Vec<Option<MorphometryRecord>> = merged
        .detections
        .par_iter()
        .map(|d| measure(0, d, &calibration, &params.morphometry).ok())
        .collect();
    let dropped = measured.iter().filter(|m| m.is_none()).count();
    if dropped > 0 {
        warnings.push(format!("{dropped} detection(s) too small to measure were dropped"));
        let mut keep = measured.iter().map(Option::is_some);
        merged.detections.retain(|_| keep.next().unwrap_or(false));
        let mut keep = measured.iter().map(Option::is_some);
        merged.provenance.retain(|_| keep.next().unwrap_or(false));
    }
    let records = measured
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(i, mut r)| {
            r.object_id = i as u64 + 1;
            r
        })
        .collect();
    Ok(AnalysisOutput {
        merged,
        records,
        warnings,
    })
}
