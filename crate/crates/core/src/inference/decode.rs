use std::cmp::Ordering;

use crate::geometry::{box_iou, BoundingBox};

use super::{InferenceError, ModelSpec};

/// Raw network outputs for one image: a candidate matrix stored row-major
/// as `anchor_count x (4 + classes + prototypes)` and the prototype tensor
/// `prototype_count x proto_h x proto_w`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPrediction {
    pub candidates: Vec<f32>,
    pub anchor_count: usize,
    pub row_len: usize,
    pub prototypes: Vec<f32>,
    pub prototype_count: usize,
    pub proto_h: usize,
    pub proto_w: usize,
}

impl RawPrediction {
    /// Builds a prediction from runtime outputs, accepting the candidate
    /// matrix either anchor-major (`[1,] N x C`) or channel-major
    /// (`[1,] C x N`, the usual export layout). Shapes are checked against
    /// `spec`.
    pub fn from_outputs(
        spec: &ModelSpec,
        candidates: Vec<f32>,
        candidate_shape: &[usize],
        prototypes: Vec<f32>,
        prototype_shape: &[usize],
    ) -> Result<Self, InferenceError> {
        let n = spec.anchor_count();
        let c = spec.row_len();
        let dims = strip_batch(candidate_shape);
        let candidates = match dims {
            [a, b] if *a == c && *b == n => transpose(&candidates, c, n),
            [a, b] if *a == n && *b == c => candidates,
            _ => return Err(contract("candidates", &[n, c], candidate_shape)),
        };
        if candidates.len() != n * c {
            return Err(contract("candidates", &[n, c], &[candidates.len()]));
        }
        let side = spec.proto_side();
        let pdims = strip_batch(prototype_shape);
        if pdims != [spec.prototype_count, side, side] || prototypes.len() != spec.prototype_count * side * side {
            return Err(contract("prototypes", &[spec.prototype_count, side, side], prototype_shape));
        }
        Ok(Self {
            candidates,
            anchor_count: n,
            row_len: c,
            prototypes,
            prototype_count: spec.prototype_count,
            proto_h: side,
            proto_w: side,
        })
    }

    pub fn row(&self, anchor: usize) -> &[f32] {
        &self.candidates[anchor * self.row_len..(anchor + 1) * self.row_len]
    }
}

fn strip_batch(shape: &[usize]) -> &[usize] {
    match shape {
        [1, rest @ ..] if rest.len() >= 2 => rest,
        s => s,
    }
}

fn transpose(data: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

fn contract(what: &'static str, expected: &[usize], actual: &[usize]) -> InferenceError {
    InferenceError::ModelContract {
        what,
        expected: expected.to_vec(),
        actual: actual.to_vec(),
    }
}

/// A decoded, not yet suppressed candidate. The box is in network-input
/// pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub anchor: usize,
    pub bbox: BoundingBox,
    pub class_index: usize,
    pub confidence: f64,
    pub coefficients: Vec<f32>,
}

/// Keeps anchors whose best class score reaches `conf_threshold`, with the
/// box converted from center/size to corner form.
pub fn decode(raw: &RawPrediction, spec: &ModelSpec, conf_threshold: f64) -> Result<Vec<Candidate>, InferenceError> {
    if raw.anchor_count != spec.anchor_count() || raw.row_len != spec.row_len() {
        return Err(contract(
            "candidates",
            &[spec.anchor_count(), spec.row_len()],
            &[raw.anchor_count, raw.row_len],
        ));
    }
    let nc = spec.class_count();
    let mut out = Vec::new();
    for anchor in 0..raw.anchor_count {
        let row = raw.row(anchor);
        let scores = &row[4..4 + nc];
        let mut class_index = 0;
        for k in 1..nc {
            if scores[k] > scores[class_index] {
                class_index = k;
            }
        }
        let confidence = scores[class_index] as f64;
        if !(confidence >= conf_threshold) {
            continue;
        }
        let bbox = BoundingBox::from_center(row[0] as f64, row[1] as f64, row[2] as f64, row[3] as f64);
        if !(bbox.width() > 0.0 && bbox.height() > 0.0) {
            continue;
        }
        out.push(Candidate {
            anchor,
            bbox,
            class_index,
            confidence,
            coefficients: row[4 + nc..].to_vec(),
        });
    }
    Ok(out)
}

/// Ordering used wherever candidates are ranked: confidence descending, then
/// box `x0` and `y0` ascending, then anchor index.
pub fn rank_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.bbox.x0.total_cmp(&b.bbox.x0))
        .then(a.bbox.y0.total_cmp(&b.bbox.y0))
        .then(a.anchor.cmp(&b.anchor))
}

/// Greedy class-wise suppression: a candidate survives unless a kept
/// candidate of the same class overlaps it with box IoU above
/// `iou_threshold`. Survivors are returned in rank order.
pub fn nms(mut candidates: Vec<Candidate>, iou_threshold: f64) -> Vec<Candidate> {
    candidates.sort_by(rank_order);
    let mut kept: Vec<Candidate> = Vec::new();
    for c in candidates {
        let suppressed = kept
            .iter()
            .any(|k| k.class_index == c.class_index && box_iou(&k.bbox, &c.bbox) > iou_threshold);
        if !suppressed {
            kept.push(c);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::CellClass;
    use rand::{Rng, SeedableRng};

    fn spec(size: usize) -> ModelSpec {
        ModelSpec::new(size, vec![CellClass::Fiber, CellClass::Vessel], 4).unwrap()
    }

    fn blank_raw(spec: &ModelSpec) -> RawPrediction {
        let side = spec.proto_side();
        RawPrediction::from_outputs(
            spec,
            vec![0.0; spec.anchor_count() * spec.row_len()],
            &[1, spec.anchor_count(), spec.row_len()],
            vec![0.0; spec.prototype_count * side * side],
            &[1, spec.prototype_count, side, side],
        )
        .unwrap()
    }

    #[test]
    fn anchor_count_for_1024() {
        assert_eq!(spec(1024).anchor_count(), 21_504);
        assert_eq!(spec(1024).proto_side(), 256);
    }

    #[test]
    fn all_scores_below_threshold_is_empty() {
        let s = spec(64);
        let mut raw = blank_raw(&s);
        for a in 0..raw.anchor_count {
            let rl = raw.row_len;
            raw.candidates[a * rl + 4] = 0.2;
            raw.candidates[a * rl + 2] = 4.0;
            raw.candidates[a * rl + 3] = 4.0;
        }
        assert!(decode(&raw, &s, 0.25).unwrap().is_empty());
    }

    #[test]
    fn single_anchor_center_to_corner() {
        let s = spec(256);
        let mut raw = blank_raw(&s);
        let rl = raw.row_len;
        let a = 17;
        raw.candidates[a * rl..a * rl + 6].copy_from_slice(&[100.0, 100.0, 50.0, 20.0, 0.1, 0.9]);
        raw.candidates[a * rl + 6] = 0.5;
        let c = decode(&raw, &s, 0.25).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].anchor, 17);
        assert_eq!(c[0].bbox, BoundingBox::new(75.0, 90.0, 125.0, 110.0).unwrap());
        assert_eq!(c[0].class_index, 1);
        assert!((c[0].confidence - 0.9).abs() < 1e-6);
        assert_eq!(c[0].coefficients, vec![0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn channel_major_layout_is_transposed() {
        let s = spec(64);
        let (n, c) = (s.anchor_count(), s.row_len());
        let mut cm = vec![0.0f32; n * c];
        // anchor 3: box and fiber score
        for (k, v) in [(0, 10.0), (1, 12.0), (2, 4.0), (3, 6.0), (4, 0.8)] {
            cm[k * n + 3] = v;
        }
        let side = s.proto_side();
        let raw = RawPrediction::from_outputs(&s, cm, &[1, c, n], vec![0.0; 4 * side * side], &[1, 4, side, side]).unwrap();
        assert_eq!(&raw.row(3)[..5], &[10.0, 12.0, 4.0, 6.0, 0.8]);
    }

    #[test]
    fn shape_mismatch_names_shapes() {
        let s = spec(64);
        let err = RawPrediction::from_outputs(&s, vec![0.0; 10], &[1, 5, 2], vec![], &[1, 4, 16, 16]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[84, 10]") && msg.contains("[1, 5, 2]"), "{msg}");
    }

    fn cand(anchor: usize, class_index: usize, confidence: f64, b: (f64, f64, f64, f64)) -> Candidate {
        Candidate {
            anchor,
            bbox: BoundingBox::new(b.0, b.1, b.2, b.3).unwrap(),
            class_index,
            confidence,
            coefficients: vec![],
        }
    }

    #[test]
    fn nms_single_and_pair() {
        let one = vec![cand(0, 0, 0.5, (0.0, 0.0, 10.0, 10.0))];
        assert_eq!(nms(one.clone(), 0.7), one);
        let a = cand(0, 0, 0.9, (0.0, 0.0, 100.0, 100.0));
        let b = cand(1, 0, 0.8, (0.0, 0.0, 100.0, 90.0));
        assert!(box_iou(&a.bbox, &b.bbox) >= 0.9 - 1e-12);
        assert_eq!(nms(vec![b.clone(), a.clone()], 0.7), vec![a.clone()]);
        // other class is never suppressed
        let c = cand(2, 1, 0.8, (0.0, 0.0, 100.0, 90.0));
        assert_eq!(nms(vec![c.clone(), a.clone()], 0.7), vec![a, c]);
    }

    /// Suppression decided from the full pairwise IoU table: walk candidates
    /// in rank order and keep one iff no earlier kept same-class candidate
    /// exceeds the threshold.
    fn nms_oracle(cands: &[Candidate], thr: f64) -> Vec<Candidate> {
        let n = cands.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| rank_order(&cands[i], &cands[j]));
        let mut iou = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                iou[i][j] = box_iou(&cands[i].bbox, &cands[j].bbox);
            }
        }
        let mut alive = vec![true; n];
        for (pos, &i) in order.iter().enumerate() {
            if !alive[i] {
                continue;
            }
            for &j in &order[pos + 1..] {
                if cands[j].class_index == cands[i].class_index && iou[i][j] > thr {
                    alive[j] = false;
                }
            }
        }
        order.into_iter().filter(|&i| alive[i]).map(|i| cands[i].clone()).collect()
    }

    pub(crate) fn random_candidates(rng: &mut impl Rng, n: usize) -> Vec<Candidate> {
        (0..n)
            .map(|i| {
                let x = rng.random_range(0.0..60.0);
                let y = rng.random_range(0.0..60.0);
                let w = rng.random_range(5.0..40.0);
                let h = rng.random_range(5.0..40.0);
                // Coarse confidences so ties occur.
                let conf = rng.random_range(1..10) as f64 / 10.0;
                cand(i, rng.random_range(0..2), conf, (x, y, x + w, y + h))
            })
            .collect()
    }

    #[test]
    fn nms_matches_pairwise_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20);
        for _ in 0..200 {
            let c = random_candidates(&mut rng, 20);
            let thr = rng.random_range(0.1..0.9);
            assert_eq!(nms(c.clone(), thr), nms_oracle(&c, thr));
        }
    }

    #[test]
    fn raising_threshold_never_adds() {
        let s = spec(64);
        let mut raw = blank_raw(&s);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let rl = raw.row_len;
        for a in 0..raw.anchor_count {
            let r = &mut raw.candidates[a * rl..(a + 1) * rl];
            r[0] = rng.random_range(0.0..64.0);
            r[1] = rng.random_range(0.0..64.0);
            r[2] = rng.random_range(1.0..20.0);
            r[3] = rng.random_range(1.0..20.0);
            r[4] = rng.random();
            r[5] = rng.random();
        }
        let mut prev = usize::MAX;
        for t in [0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0] {
            let n = nms(decode(&raw, &s, t).unwrap(), 0.7).len();
            assert!(n <= prev);
            prev = n;
        }
    }
}
