use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{box_iou, BoundingBox, PlacedMask};
use crate::inference::Detection;
use crate::CellClass;

/// Overlap measure used for matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Box,
    Mask,
}

impl std::str::FromStr for MatchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "box" | "bbox" => Ok(MatchMode::Box),
            "mask" | "segm" => Ok(MatchMode::Mask),
            _ => Err(format!("unknown match mode `{s}` (box or mask)")),
        }
    }
}

/// A reference object. Overlapping truths are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub class: CellClass,
    pub mask: PlacedMask,
}

impl GroundTruth {
    pub fn bbox(&self) -> BoundingBox {
        self.mask.rect().to_box()
    }
}

/// Predictions and references of one image.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalImage {
    pub predictions: Vec<Detection>,
    pub truth: Vec<GroundTruth>,
}

/// One scored prediction after matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    pub confidence: f64,
    pub true_positive: bool,
    /// `(image, prediction)` position, the tie-break after confidence.
    pub order: (usize, usize),
    /// Matched truth index within its image.
    pub truth: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMatches {
    /// Sorted by confidence desc, then `order`.
    pub predictions: Vec<ScoredPrediction>,
    pub truth_count: usize,
}

impl ClassMatches {
    pub fn true_positives(&self) -> usize {
        self.predictions.iter().filter(|p| p.true_positive).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub iou_threshold: f64,
    pub classes: BTreeMap<CellClass, ClassMatches>,
}

impl MatchResult {
    pub fn class(&self, class: CellClass) -> ClassMatches {
        self.classes.get(&class).cloned().unwrap_or_default()
    }

    /// Concatenates per-image results; prediction order is kept sorted.
    pub fn merge(mut self, other: MatchResult) -> MatchResult {
        for (class, m) in other.classes {
            let e = self.classes.entry(class).or_default();
            e.truth_count += m.truth_count;
            e.predictions.extend(m.predictions);
            sort_scored(&mut e.predictions);
        }
        self
    }
}

pub(crate) fn sort_scored(p: &mut [ScoredPrediction]) {
    p.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then(a.order.cmp(&b.order)));
}

fn pair_iou(p: &Detection, t: &GroundTruth, mode: MatchMode) -> f64 {
    match mode {
        MatchMode::Box => box_iou(&p.bbox, &t.bbox()),
        MatchMode::Mask => {
            if p.mask.rect().intersect(&t.mask.rect()).is_none() {
                0.0
            } else {
                p.mask.iou(&t.mask)
            }
        }
    }
}

/// Prediction-by-truth IoU tables for one image, per class. Computed once
/// and reused across thresholds.
#[derive(Debug, Clone)]
pub struct IouTable {
    /// Per class: prediction indices (confidence order), truth indices and
    /// the row-major IoU matrix.
    classes: BTreeMap<CellClass, (Vec<usize>, Vec<usize>, Vec<f64>)>,
    confidences: Vec<f64>,
    image: usize,
}

impl IouTable {
    pub fn new(image_index: usize, image: &EvalImage, mode: MatchMode) -> Self {
        let mut classes = BTreeMap::new();
        for class in CellClass::ALL {
            let mut preds: Vec<usize> = (0..image.predictions.len())
                .filter(|&i| image.predictions[i].class == class)
                .collect();
            preds.sort_by(|&a, &b| {
                image.predictions[b]
                    .confidence
                    .total_cmp(&image.predictions[a].confidence)
                    .then(a.cmp(&b))
            });
            let truths: Vec<usize> = (0..image.truth.len()).filter(|&i| image.truth[i].class == class).collect();
            let mut iou = Vec::with_capacity(preds.len() * truths.len());
            for &p in &preds {
                for &t in &truths {
                    iou.push(pair_iou(&image.predictions[p], &image.truth[t], mode));
                }
            }
            classes.insert(class, (preds, truths, iou));
        }
        Self {
            classes,
            confidences: image.predictions.iter().map(|p| p.confidence).collect(),
            image: image_index,
        }
    }

    /// Greedy matching: each prediction in confidence order takes the
    /// unmatched truth of highest IoU (lowest index on ties) if that IoU
    /// reaches `iou_threshold`.
    pub fn matches(&self, iou_threshold: f64) -> MatchResult {
        let mut classes = BTreeMap::new();
        for (&class, (preds, truths, iou)) in &self.classes {
            let mut taken = vec![false; truths.len()];
            let mut scored = Vec::with_capacity(preds.len());
            for (row, &p) in preds.iter().enumerate() {
                let mut best: Option<(usize, f64)> = None;
                for (col, &used) in taken.iter().enumerate() {
                    let v = iou[row * truths.len() + col];
                    if !used && v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                        best = Some((col, v));
                    }
                }
                if let Some((col, _)) = best {
                    taken[col] = true;
                }
                scored.push(ScoredPrediction {
                    confidence: self.confidences[p],
                    true_positive: best.is_some(),
                    order: (self.image, p),
                    truth: best.map(|(col, _)| truths[col]),
                });
            }
            classes.insert(
                class,
                ClassMatches {
                    predictions: scored,
                    truth_count: truths.len(),
                },
            );
        }
        MatchResult {
            iou_threshold,
            classes,
        }
    }
}

/// Matches one image's predictions against its truths.
pub fn match_detections(
    predictions: &[Detection],
    truth: &[GroundTruth],
    iou_threshold: f64,
    mode: MatchMode,
) -> MatchResult {
    let image = EvalImage {
        predictions: predictions.to_vec(),
        truth: truth.to_vec(),
    };
    IouTable::new(0, &image, mode).matches(iou_threshold)
}

/// Matches a set of images and merges the results.
pub fn match_images(images: &[EvalImage], iou_threshold: f64, mode: MatchMode) -> MatchResult {
    images
        .iter()
        .enumerate()
        .map(|(i, img)| IouTable::new(i, img, mode).matches(iou_threshold))
        .fold(
            MatchResult {
                iou_threshold,
                classes: BTreeMap::new(),
            },
            MatchResult::merge,
        )
}
