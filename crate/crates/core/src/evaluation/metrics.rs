use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matching::{ClassMatches, EvalImage, IouTable, MatchMode, MatchResult};
use crate::CellClass;

/// Recall sample points of the interpolated PR curve.
pub const RECALL_POINTS: usize = 101;

/// IoU thresholds 0.50, 0.55, ..., 0.95, built from integers so that 0.6
/// is exactly 0.6.
pub fn iou_thresholds() -> Vec<f64> {
    (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

/// Raw `(recall, precision)` after each prediction in ranked order.
pub fn pr_points(m: &ClassMatches) -> Vec<(f64, f64)> {
    let mut tp = 0usize;
    m.predictions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            tp += p.true_positive as usize;
            (tp as f64 / m.truth_count as f64, tp as f64 / (i + 1) as f64)
        })
        .collect()
}

/// Precision at recall `k / 100` for `k = 0..=100`, after replacing each
/// precision by the maximum to its right. Zero beyond the reached recall.
pub fn interpolated_precision(m: &ClassMatches) -> Vec<f64> {
    let mut pts = pr_points(m);
    for i in (0..pts.len().saturating_sub(1)).rev() {
        pts[i].1 = pts[i].1.max(pts[i + 1].1);
    }
    let mut out = Vec::with_capacity(RECALL_POINTS);
    let mut j = 0;
    for k in 0..RECALL_POINTS {
        let r = k as f64 / (RECALL_POINTS - 1) as f64;
        while j < pts.len() && pts[j].0 < r {
            j += 1;
        }
        out.push(if j < pts.len() { pts[j].1 } else { 0.0 });
    }
    out
}

/// 101-point average precision. `None` when the class has no truths.
pub fn average_precision(result: &MatchResult, class: CellClass) -> Option<f64> {
    let m = result.classes.get(&class)?;
    if m.truth_count == 0 {
        return None;
    }
    let p = interpolated_precision(m);
    Some(p.iter().sum::<f64>() / p.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub iou_threshold: f64,
    /// AP per class; absent classes had no truths.
    pub ap: BTreeMap<CellClass, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    pub map50: f64,
    pub map50_95: f64,
    pub table: Vec<ThresholdRow>,
    /// Classes left out because they had no truths.
    pub skipped: Vec<CellClass>,
}

fn mean(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn tables(images: &[EvalImage], mode: MatchMode) -> Vec<IouTable> {
    images
        .par_iter()
        .enumerate()
        .map(|(i, img)| IouTable::new(i, img, mode))
        .collect()
}

fn match_tables(tables: &[IouTable], iou_threshold: f64) -> MatchResult {
    tables.iter().map(|t| t.matches(iou_threshold)).fold(
        MatchResult {
            iou_threshold,
            classes: BTreeMap::new(),
        },
        MatchResult::merge,
    )
}

fn map_from_tables(tables: &[IouTable]) -> MapSummary {
    let table: Vec<ThresholdRow> = iou_thresholds()
        .into_iter()
        .map(|t| {
            let m = match_tables(tables, t);
            ThresholdRow {
                iou_threshold: t,
                ap: CellClass::ALL
                    .iter()
                    .filter_map(|&c| average_precision(&m, c).map(|ap| (c, ap)))
                    .collect(),
            }
        })
        .collect();
    let skipped: Vec<CellClass> = CellClass::ALL
        .into_iter()
        .filter(|c| !table[0].ap.contains_key(c))
        .collect();
    if !skipped.is_empty() {
        log::info!("classes without ground truth skipped in mAP: {skipped:?}");
    }
    let map50 = mean(table[0].ap.values().copied()).unwrap_or(0.0);
    let map50_95 = mean(table.iter().flat_map(|r| r.ap.values().copied())).unwrap_or(0.0);
    MapSummary {
        map50,
        map50_95,
        table,
        skipped,
    }
}

/// mAP at 0.5 and averaged over 0.50:0.95 (class mean, then threshold mean).
pub fn map_range(images: &[EvalImage], mode: MatchMode) -> MapSummary {
    map_from_tables(&tables(images, mode))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub confidence: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub(crate) fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Cutoffs: 0, every distinct confidence and 1, ascending.
pub fn cutoffs(result: &MatchResult) -> Vec<f64> {
    let mut c: Vec<f64> = result
        .classes
        .values()
        .flat_map(|m| m.predictions.iter().map(|p| p.confidence))
        .chain([0.0, 1.0])
        .collect();
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// Precision and recall of one class keeping predictions with confidence
/// at or above `cutoff`. Greedy matching runs in confidence order, so the
/// matches of the kept predictions do not depend on the dropped ones.
pub fn operating_point(m: &ClassMatches, cutoff: f64) -> (f64, f64) {
    let kept = m.predictions.iter().take_while(|p| p.confidence >= cutoff);
    let (n, tp) = kept.fold((0usize, 0usize), |(n, tp), p| (n + 1, tp + p.true_positive as usize));
    let precision = if n == 0 { 0.0 } else { tp as f64 / n as f64 };
    let recall = if m.truth_count == 0 { 0.0 } else { tp as f64 / m.truth_count as f64 };
    (precision, recall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Curve {
    pub per_class: BTreeMap<CellClass, Vec<CurvePoint>>,
    /// Class-mean precision and recall with F1 taken from those means.
    pub aggregate: Vec<CurvePoint>,
    /// Highest aggregate F1; ties go to the lower cutoff.
    pub best: CurvePoint,
}

/// F1 against confidence cutoff at one IoU threshold. Classes without
/// truths are left out of the aggregate.
pub fn f1_confidence_curve(result: &MatchResult) -> F1Curve {
    let cuts = cutoffs(result);
    let classes: Vec<(CellClass, &ClassMatches)> = result
        .classes
        .iter()
        .filter(|(_, m)| m.truth_count > 0)
        .map(|(&c, m)| (c, m))
        .collect();
    let mut per_class = BTreeMap::new();
    for &(c, m) in &classes {
        let pts = cuts
            .iter()
            .map(|&cut| {
                let (p, r) = operating_point(m, cut);
                CurvePoint {
                    confidence: cut,
                    precision: p,
                    recall: r,
                    f1: f1(p, r),
                }
            })
            .collect();
        per_class.insert(c, pts);
    }
    let aggregate: Vec<CurvePoint> = cuts
        .iter()
        .enumerate()
        .map(|(i, &cut)| {
            let p = mean(per_class.values().map(|v: &Vec<CurvePoint>| v[i].precision)).unwrap_or(0.0);
            let r = mean(per_class.values().map(|v: &Vec<CurvePoint>| v[i].recall)).unwrap_or(0.0);
            CurvePoint {
                confidence: cut,
                precision: p,
                recall: r,
                f1: f1(p, r),
            }
        })
        .collect();
    let best = aggregate
        .iter()
        .copied()
        .fold(None, |best: Option<CurvePoint>, p| match best {
            Some(b) if b.f1 >= p.f1 => Some(b),
            _ => Some(p),
        })
        .expect("cutoffs always include 0 and 1");
    F1Curve {
        per_class,
        aggregate,
        best,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Full scoring of a prediction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mode: MatchMode,
    /// Cutoff of the F1-optimal point, where the scores are reported.
    pub operating_confidence: f64,
    pub per_class: BTreeMap<CellClass, Scores>,
    pub aggregate: Scores,
    pub map50: f64,
    pub map50_95: f64,
    pub ap_table: Vec<ThresholdRow>,
    /// Interpolated precision at recall 0.00..1.00, IoU 0.5.
    pub pr_curves: BTreeMap<CellClass, Vec<(f64, f64)>>,
    pub f1_curve: Vec<CurvePoint>,
    pub best_f1: (f64, f64),
    pub notices: Vec<String>,
}

/// Scores predictions at IoU 0.5 for P/R/F1 and curves, and over 0.50:0.95
/// for mAP.
pub fn evaluate(images: &[EvalImage], mode: MatchMode) -> EvaluationReport {
    let tables = tables(images, mode);
    let map = map_from_tables(&tables);
    let m50 = match_tables(&tables, 0.5);
    let curve = f1_confidence_curve(&m50);
    let cut = curve.best.confidence;
    let mut per_class = BTreeMap::new();
    let mut pr_curves = BTreeMap::new();
    for (&c, m) in &m50.classes {
        if m.truth_count == 0 {
            continue;
        }
        let (p, r) = operating_point(m, cut);
        per_class.insert(
            c,
            Scores {
                precision: p,
                recall: r,
                f1: f1(p, r),
            },
        );
        let ip = interpolated_precision(m);
        pr_curves.insert(
            c,
            ip.into_iter()
                .enumerate()
                .map(|(k, p)| (k as f64 / (RECALL_POINTS - 1) as f64, p))
                .collect(),
        );
    }
    let notices = map
        .skipped
        .iter()
        .map(|c| format!("class {c} has no ground truth and is left out of the averages"))
        .collect();
    EvaluationReport {
        mode,
        operating_confidence: cut,
        per_class,
        aggregate: Scores {
            precision: curve.best.precision,
            recall: curve.best.recall,
            f1: curve.best.f1,
        },
        map50: map.map50,
        map50_95: map.map50_95,
        ap_table: map.table,
        pr_curves,
        f1_curve: curve.aggregate,
        best_f1: (curve.best.confidence, curve.best.f1),
        notices,
    }
}

impl EvaluationReport {
    /// Whitespace-separated `class recall precision` rows.
    pub fn pr_table(&self) -> String {
        let mut s = String::from("class recall precision\n");
        for (c, pts) in &self.pr_curves {
            for (r, p) in pts {
                s.push_str(&format!("{c} {r:.2} {p:.6}\n"));
            }
        }
        s
    }

    /// Whitespace-separated `confidence precision recall f1` rows.
    pub fn f1_table(&self) -> String {
        let mut s = String::from("confidence precision recall f1\n");
        for p in &self.f1_curve {
            s.push_str(&format!(
                "{:.6} {:.6} {:.6} {:.6}\n",
                p.confidence, p.precision, p.recall, p.f1
            ));
        }
        s
    }

    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "mode: {:?}\nmAP50: {:.4}\nmAP50-95: {:.4}\noperating confidence (F1-optimal): {:.4}\n",
            self.mode, self.map50, self.map50_95, self.operating_confidence
        );
        s.push_str("class      precision  recall     f1\n");
        for (c, sc) in &self.per_class {
            s.push_str(&format!(
                "{:<10} {:<10.4} {:<10.4} {:.4}\n",
                c.name(),
                sc.precision,
                sc.recall,
                sc.f1
            ));
        }
        s.push_str(&format!(
            "{:<10} {:<10.4} {:<10.4} {:.4}\n",
            "all", self.aggregate.precision, self.aggregate.recall, self.aggregate.f1
        ));
        for n in &self.notices {
            s.push_str(&format!("note: {n}\n"));
        }
        s
    }
}
