use crate::geometry::{BinaryMask, BoundingBox, PlacedMask};

use super::{LetterboxTransform, RawPrediction};

fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

/// Builds the source-image mask of one candidate.
///
/// The prototype combination is passed through a sigmoid at prototype
/// resolution, sampled bilinearly at each source pixel's position in
/// network-input space, restricted to the candidate box dilated by
/// `box_dilation` source pixels, and thresholded strictly above
/// `mask_threshold`. `None` when nothing survives.
pub fn compose_mask(
    coefficients: &[f32],
    raw: &RawPrediction,
    input_box: &BoundingBox,
    transform: &LetterboxTransform,
    mask_threshold: f32,
    box_dilation: f64,
) -> Option<PlacedMask> {
    assert_eq!(coefficients.len(), raw.prototype_count, "coefficient count must match prototypes");
    let (sw, sh) = (transform.source_width, transform.source_height);
    let rect = transform
        .box_to_source(input_box)
        .dilate(box_dilation)
        .clamp(sw as f64, sh as f64)
        .pixel_rect(sw, sh)?;

    let (pw, ph) = (raw.proto_w, raw.proto_h);
    let stride_x = transform.input_size as f64 / pw as f64;
    let stride_y = transform.input_size as f64 / ph as f64;
    // Continuous prototype coordinate of a source pixel center.
    let proto_u = |x: usize| ((x as f64 + 0.5) * transform.scale + transform.pad_x) / stride_x - 0.5;
    let proto_v = |y: usize| ((y as f64 + 0.5) * transform.scale + transform.pad_y) / stride_y - 0.5;

    let clamp_idx = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
    let u0 = clamp_idx(proto_u(rect.x), pw);
    let u1 = clamp_idx(proto_u(rect.x_end() - 1), pw).saturating_add(1).min(pw - 1);
    let v0 = clamp_idx(proto_v(rect.y), ph);
    let v1 = clamp_idx(proto_v(rect.y_end() - 1), ph).saturating_add(1).min(ph - 1);

    // Sigmoid of the linear combination over the prototype window.
    let (ww, wh) = (u1 - u0 + 1, v1 - v0 + 1);
    let plane = pw * ph;
    let mut prob = vec![0.0f32; ww * wh];
    for j in 0..wh {
        for i in 0..ww {
            let at = (v0 + j) * pw + u0 + i;
            let mut acc = 0.0f32;
            for (k, &c) in coefficients.iter().enumerate() {
                acc += c * raw.prototypes[k * plane + at];
            }
            prob[j * ww + i] = sigmoid(acc);
        }
    }
    let sample = |u: f64, v: f64| -> f32 {
        let u = u.clamp(0.0, (pw - 1) as f64);
        let v = v.clamp(0.0, (ph - 1) as f64);
        let (iu, iv) = (u.floor() as usize, v.floor() as usize);
        let (fu, fv) = ((u - iu as f64) as f32, (v - iv as f64) as f32);
        let (iu2, iv2) = ((iu + 1).min(pw - 1), (iv + 1).min(ph - 1));
        let g = |a: usize, b: usize| prob[(b - v0) * ww + a - u0];
        let top = g(iu, iv) * (1.0 - fu) + g(iu2, iv) * fu;
        let bottom = g(iu, iv2) * (1.0 - fu) + g(iu2, iv2) * fu;
        top * (1.0 - fv) + bottom * fv
    };

    let mut mask = BinaryMask::new(rect.width, rect.height).ok()?;
    let mut any = false;
    for y in rect.y..rect.y_end() {
        let v = proto_v(y);
        for x in rect.x..rect.x_end() {
            if sample(proto_u(x), v) > mask_threshold {
                mask.set(x - rect.x, y - rect.y, true);
                any = true;
            }
        }
    }
    if !any {
        return None;
    }
    PlacedMask::new(rect.x, rect.y, mask).trimmed()
}
