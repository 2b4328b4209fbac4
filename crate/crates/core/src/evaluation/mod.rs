//! Scoring predictions against reference outlines: greedy matching, 101-point
//! AP, mAP over IoU 0.50:0.95 and F1-confidence curves.

mod matching;
mod metrics;

pub use matching::{
    match_detections, match_images, ClassMatches, EvalImage, GroundTruth, IouTable, MatchMode, MatchResult,
    ScoredPrediction,
};
pub use metrics::{
    average_precision, cutoffs, evaluate, f1_confidence_curve, interpolated_precision, iou_thresholds, map_range,
    operating_point, pr_points, CurvePoint, EvaluationReport, F1Curve, MapSummary, Scores, ThresholdRow,
    RECALL_POINTS,
};

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::geometry::{BinaryMask, PlacedMask};
    use crate::inference::Detection;
    use crate::CellClass;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rect(x: usize, y: usize, w: usize, h: usize) -> PlacedMask {
        PlacedMask::new(x, y, BinaryMask::from_fn(w, h, |_, _| true).unwrap())
    }

    fn pred(class: CellClass, conf: f64, m: PlacedMask) -> Detection {
        Detection::from_mask(class, conf, None, m).unwrap()
    }

    fn truth(class: CellClass, m: PlacedMask) -> GroundTruth {
        GroundTruth { class, mask: m }
    }

    fn pixels(m: &PlacedMask) -> HashSet<(usize, usize)> {
        m.foreground().collect()
    }

    fn set_iou(a: &HashSet<(usize, usize)>, b: &HashSet<(usize, usize)>) -> f64 {
        let inter = a.intersection(b).count();
        let union = a.union(b).count();
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Straightforward matching over pixel sets: returns, per class, the
    /// (confidence, tp, prediction index) list and the truth count.
    fn oracle_match(img: &EvalImage, thr: f64, class: CellClass) -> (Vec<(f64, bool, usize)>, usize) {
        let truths: Vec<(usize, HashSet<(usize, usize)>)> = img
            .truth
            .iter()
            .enumerate()
            .filter(|(_, t)| t.class == class)
            .map(|(i, t)| (i, pixels(&t.mask)))
            .collect();
        let mut order: Vec<usize> = (0..img.predictions.len())
            .filter(|&i| img.predictions[i].class == class)
            .collect();
        order.sort_by(|&a, &b| {
            img.predictions[b]
                .confidence
                .partial_cmp(&img.predictions[a].confidence)
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut used = vec![false; truths.len()];
        let mut out = Vec::new();
        for i in order {
            let pp = pixels(&img.predictions[i].mask);
            let mut best = None;
            let mut best_iou = -1.0;
            for (k, (_, tp)) in truths.iter().enumerate() {
                let v = set_iou(&pp, tp);
                if !used[k] && v >= thr && v > best_iou {
                    best = Some(k);
                    best_iou = v;
                }
            }
            if let Some(k) = best {
                used[k] = true;
            }
            out.push((img.predictions[i].confidence, best.is_some(), i));
        }
        (out, truths.len())
    }

    /// AP straight from the definition: mean over r = k/100 of the best
    /// precision achieved at any recall >= r.
    fn oracle_ap(seq: &[bool], gt: usize) -> f64 {
        let mut pts = Vec::new();
        let mut tp = 0;
        for (i, &t) in seq.iter().enumerate() {
            tp += t as usize;
            pts.push((tp as f64 / gt as f64, tp as f64 / (i + 1) as f64));
        }
        let mut s = 0.0;
        for k in 0..=100 {
            let r = k as f64 / 100.0;
            s += pts.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max);
        }
        s / 101.0
    }

    fn random_image(rng: &mut ChaCha8Rng, max_pred: usize, max_truth: usize) -> EvalImage {
        let mut truth_list = Vec::new();
        for _ in 0..rng.random_range(0..=max_truth) {
            let c = if rng.random_bool(0.6) { CellClass::Fiber } else { CellClass::Vessel };
            truth_list.push(truth(
                c,
                rect(rng.random_range(0..40), rng.random_range(0..40), rng.random_range(3..15), rng.random_range(3..15)),
            ));
        }
        let mut predictions = Vec::new();
        for _ in 0..rng.random_range(0..=max_pred) {
            let conf = rng.random_range(1..=10) as f64 / 10.0;
            if !truth_list.is_empty() && rng.random_bool(0.7) {
                let t = &truth_list[rng.random_range(0..truth_list.len())];
                let r = t.mask.rect();
                let dx = rng.random_range(0..3);
                let dy = rng.random_range(0..3);
                let class = if rng.random_bool(0.9) { t.class } else { CellClass::Vessel };
                predictions.push(pred(class, conf, rect(r.x + dx, r.y + dy, r.width, r.height)));
            } else {
                let c = if rng.random_bool(0.5) { CellClass::Fiber } else { CellClass::Vessel };
                predictions.push(pred(
                    c,
                    conf,
                    rect(rng.random_range(0..40), rng.random_range(0..40), rng.random_range(3..15), rng.random_range(3..15)),
                ));
            }
        }
        EvalImage { predictions, truth: truth_list }
    }

    #[test]
    fn perfect_single_match() {
        let m = match_detections(
            &[pred(CellClass::Fiber, 0.9, rect(5, 5, 10, 4))],
            &[truth(CellClass::Fiber, rect(5, 5, 10, 4))],
            0.5,
            MatchMode::Mask,
        );
        let c = m.class(CellClass::Fiber);
        assert_eq!((c.true_positives(), c.predictions.len(), c.truth_count), (1, 1, 1));
    }

    #[test]
    fn second_prediction_on_same_truth_is_fp() {
        let m = match_detections(
            &[pred(CellClass::Fiber, 0.6, rect(5, 5, 10, 4)), pred(CellClass::Fiber, 0.9, rect(5, 6, 10, 4))],
            &[truth(CellClass::Fiber, rect(5, 5, 10, 4))],
            0.5,
            MatchMode::Mask,
        );
        let c = m.class(CellClass::Fiber);
        assert!(c.predictions[0].true_positive && c.predictions[0].confidence == 0.9);
        assert!(!c.predictions[1].true_positive);
    }

    #[test]
    fn hand_computed_ap() {
        let mut m = MatchResult {
            iou_threshold: 0.5,
            classes: Default::default(),
        };
        m.classes.insert(
            CellClass::Fiber,
            ClassMatches {
                predictions: [true, false, true]
                    .iter()
                    .enumerate()
                    .map(|(i, &tp)| ScoredPrediction {
                        confidence: 0.9 - i as f64 * 0.1,
                        true_positive: tp,
                        order: (0, i),
                        truth: None,
                    })
                    .collect(),
                truth_count: 2,
            },
        );
        let ap = average_precision(&m, CellClass::Fiber).unwrap();
        assert!((ap - (51.0 + 50.0 * 2.0 / 3.0) / 101.0).abs() < 1e-12);
        assert!((ap - 0.8350).abs() < 5e-5);
        assert_eq!(average_precision(&m, CellClass::Vessel), None);
    }

    #[test]
    fn ap_extremes() {
        let t = vec![truth(CellClass::Fiber, rect(0, 0, 5, 5)), truth(CellClass::Fiber, rect(20, 20, 5, 5))];
        let all = match_detections(
            &[pred(CellClass::Fiber, 0.9, rect(0, 0, 5, 5)), pred(CellClass::Fiber, 0.8, rect(20, 20, 5, 5))],
            &t,
            0.5,
            MatchMode::Mask,
        );
        assert_eq!(average_precision(&all, CellClass::Fiber), Some(1.0));
        let none = match_detections(&[], &t, 0.5, MatchMode::Mask);
        assert_eq!(average_precision(&none, CellClass::Fiber), Some(0.0));
    }

    #[test]
    fn perfect_predictions_map_one() {
        let img = EvalImage {
            predictions: vec![
                pred(CellClass::Fiber, 0.9, rect(0, 0, 30, 5)),
                pred(CellClass::Vessel, 0.8, rect(40, 40, 20, 20)),
            ],
            truth: vec![truth(CellClass::Fiber, rect(0, 0, 30, 5)), truth(CellClass::Vessel, rect(40, 40, 20, 20))],
        };
        let s = map_range(&[img], MatchMode::Mask);
        assert_eq!((s.map50, s.map50_95), (1.0, 1.0));
    }

    #[test]
    fn iou_point_six_counts_three_thresholds() {
        // 10x10 truth, 10x6 prediction inside it: IoU 60/100.
        let img = EvalImage {
            predictions: vec![pred(CellClass::Fiber, 0.9, rect(0, 0, 10, 6))],
            truth: vec![truth(CellClass::Fiber, rect(0, 0, 10, 10))],
        };
        assert_eq!(match_detections(&img.predictions, &img.truth, 0.6, MatchMode::Mask).class(CellClass::Fiber).true_positives(), 1);
        let s = map_range(&[img], MatchMode::Mask);
        assert_eq!(s.map50, 1.0);
        assert!((s.map50_95 - 0.3 * s.map50).abs() < 1e-12);
        assert_eq!(s.skipped, vec![CellClass::Vessel]);
    }

    #[test]
    fn thresholds_are_exact_decimals() {
        let t = iou_thresholds();
        assert_eq!(t.len(), 10);
        assert_eq!(t[2], 0.6);
        assert_eq!(t[9], 0.95);
    }

    #[test]
    fn f1_single_perfect_prediction() {
        let m = match_detections(
            &[pred(CellClass::Fiber, 0.8, rect(0, 0, 5, 5))],
            &[truth(CellClass::Fiber, rect(0, 0, 5, 5))],
            0.5,
            MatchMode::Mask,
        );
        let c = f1_confidence_curve(&m);
        for p in &c.aggregate {
            assert_eq!(p.f1, if p.confidence <= 0.8 { 1.0 } else { 0.0 });
        }
        assert_eq!(c.best.confidence, 0.0);
    }

    #[test]
    fn f1_without_predictions_is_zero() {
        let m = match_detections(&[], &[truth(CellClass::Fiber, rect(0, 0, 5, 5))], 0.5, MatchMode::Mask);
        let c = f1_confidence_curve(&m);
        assert!(c.aggregate.iter().all(|p| p.f1 == 0.0));
        assert_eq!(c.aggregate.len(), 2);
    }

    #[test]
    fn randomized_against_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for scenario in 0..60 {
            let img = random_image(&mut rng, 12, 8);
            for thr in iou_thresholds() {
                let m = match_detections(&img.predictions, &img.truth, thr, MatchMode::Mask);
                for class in CellClass::ALL {
                    let (expected, gt) = oracle_match(&img, thr, class);
                    let got = m.class(class);
                    assert_eq!(got.truth_count, gt);
                    let got_seq: Vec<(f64, bool, usize)> =
                        got.predictions.iter().map(|p| (p.confidence, p.true_positive, p.order.1)).collect();
                    assert_eq!(got_seq, expected, "scenario {scenario} thr {thr}");
                    if gt > 0 {
                        let seq: Vec<bool> = expected.iter().map(|e| e.1).collect();
                        let ap = average_precision(&m, class).unwrap();
                        assert!((ap - oracle_ap(&seq, gt)).abs() < 1e-9);
                    }
                }
            }
            // F1 curve: re-run matching with only the kept predictions.
            let m = match_detections(&img.predictions, &img.truth, 0.5, MatchMode::Mask);
            let curve = f1_confidence_curve(&m);
            for point in &curve.aggregate {
                let kept = EvalImage {
                    predictions: img.predictions.iter().filter(|p| p.confidence >= point.confidence).cloned().collect(),
                    truth: img.truth.clone(),
                };
                let mut ps = Vec::new();
                let mut rs = Vec::new();
                for class in CellClass::ALL {
                    let (seq, gt) = oracle_match(&kept, 0.5, class);
                    if gt == 0 {
                        continue;
                    }
                    let tp = seq.iter().filter(|s| s.1).count() as f64;
                    ps.push(if seq.is_empty() { 0.0 } else { tp / seq.len() as f64 });
                    rs.push(tp / gt as f64);
                }
                let (p, r) = if ps.is_empty() {
                    (0.0, 0.0)
                } else {
                    (ps.iter().sum::<f64>() / ps.len() as f64, rs.iter().sum::<f64>() / rs.len() as f64)
                };
                let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
                assert_eq!((point.precision, point.recall, point.f1), (p, r, f));
            }
        }
    }

    #[test]
    fn box_and_mask_agree_on_filled_boxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..30 {
            let img = random_image(&mut rng, 12, 8);
            assert_eq!(map_range(&[img.clone()], MatchMode::Box), map_range(&[img], MatchMode::Mask));
        }
    }

    #[test]
    fn extra_false_positive_never_raises_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let mut img = random_image(&mut rng, 10, 8);
            let before = match_images(&[img.clone()], 0.5, MatchMode::Mask);
            img.predictions.push(pred(CellClass::Fiber, 0.55, rect(200, 200, 5, 5)));
            let after = match_images(&[img], 0.5, MatchMode::Mask);
            let (b, a) = (before.class(CellClass::Fiber), after.class(CellClass::Fiber));
            if b.truth_count == 0 {
                continue;
            }
            let (ib, ia) = (interpolated_precision(&b), interpolated_precision(&a));
            assert!(ib.iter().zip(&ia).all(|(x, y)| y <= x));
        }
    }

    #[test]
    fn report_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let images: Vec<EvalImage> = (0..5).map(|_| random_image(&mut rng, 12, 8)).collect();
        let r = evaluate(&images, MatchMode::Mask);
        assert!(r.map50_95 <= r.map50 + 1e-12);
        for s in r.per_class.values().chain([&r.aggregate]) {
            for v in [s.precision, s.recall, s.f1] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
        let a = r.aggregate;
        let expect = if a.precision + a.recall == 0.0 { 0.0 } else { 2.0 * a.precision * a.recall / (a.precision + a.recall) };
        assert!((a.f1 - expect).abs() < 1e-12);
        assert!(r.pr_table().lines().count() > 101);
        assert!(r.summary().contains("mAP50-95"));
    }

    #[test]
    fn multi_image_merge_keeps_ranking() {
        let a = EvalImage {
            predictions: vec![pred(CellClass::Fiber, 0.5, rect(0, 0, 5, 5))],
            truth: vec![truth(CellClass::Fiber, rect(0, 0, 5, 5))],
        };
        let b = EvalImage {
            predictions: vec![pred(CellClass::Fiber, 0.9, rect(50, 50, 5, 5))],
            truth: vec![truth(CellClass::Fiber, rect(0, 0, 5, 5))],
        };
        let m = match_images(&[a, b], 0.5, MatchMode::Mask);
        let c = m.class(CellClass::Fiber);
        assert_eq!(c.truth_count, 2);
        assert_eq!(c.predictions[0].order, (1, 0));
        assert!(!c.predictions[0].true_positive && c.predictions[1].true_positive);
    }
}
