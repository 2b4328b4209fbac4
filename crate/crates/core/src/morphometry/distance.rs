use crate::geometry::BinaryMask;

/// Exact squared Euclidean distance from every pixel center to the nearest
/// background pixel center, with everything outside the mask counting as
/// background. Background pixels get 0.
///
/// Separable lower-envelope algorithm of Felzenszwalb and Huttenlocher.
pub fn squared_distance_transform(mask: &BinaryMask) -> Vec<f64> {
    // Pad by one so the frame border is background.
    let (w, h) = (mask.width() + 2, mask.height() + 2);
    let inf = ((w * w + h * h) as f64) * 4.0;
    let mut grid = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let fg = x > 0 && y > 0 && mask.get(x - 1, y - 1);
            grid[y * w + x] = if fg { inf } else { 0.0 };
        }
    }
    let mut f = vec![0.0; w.max(h)];
    let mut d = vec![0.0; w.max(h)];
    let mut v = vec![0usize; w.max(h)];
    let mut z = vec![0.0; w.max(h) + 1];
    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        edt_1d(&f[..h], &mut d[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = d[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        edt_1d(&f[..w], &mut d[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&d[..w]);
    }
    let (mw, mh) = mask.dims();
    let mut out = vec![0.0; mw * mh];
    for y in 0..mh {
        for x in 0..mw {
            out[y * mw + x] = grid[(y + 1) * w + x + 1];
        }
    }
    out
}

fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        let parabola_cut = |p: usize| {
            let pf = p as f64;
            ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf)
        };
        let mut s = parabola_cut(v[k]);
        while s <= z[k] {
            k -= 1;
            s = parabola_cut(v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for q in 0..n {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        d[q] = (qf - p) * (qf - p) + f[v[k]];
    }
}

/// Twice the largest distance from a foreground pixel to the background.
pub fn width_from_distance_transform(mask: &BinaryMask) -> f64 {
    let dt = squared_distance_transform(mask);
    let max = dt.iter().copied().fold(0.0, f64::max);
    2.0 * max.sqrt()
}

/// Width from the largest disk that fits inside the pixel area of the mask.
///
/// Candidate centers are pixel centers, corners and edge midpoints; the
/// radius is the distance to the nearest point of any background pixel
/// (the frame outside the mask counts as background). Digitised edges cut
/// into the true outline by about a quarter pixel on each side, which the
/// half-pixel added to the diameter compensates.
///
/// Unlike [`width_from_distance_transform`], the result does not depend on
/// edge orientation by more than the digitisation itself.
pub fn inscribed_width(mask: &BinaryMask) -> f64 {
    let (w, h) = mask.dims();
    // Half-pixel lattice: index `a` sits at coordinate `(a - 1) / 2`.
    let (gw, gh) = (2 * w + 3, 2 * h + 3);
    let pixel = |p: isize, q: isize| mask.get_signed(p, q);
    // Pixels whose closed square contains lattice coordinate (a-1)/2.
    let span = |a: usize| -> (isize, isize) {
        let t = a as isize - 1;
        if t % 2 == 0 {
            (t / 2 - 1, t / 2)
        } else {
            ((t - 1) / 2, (t - 1) / 2)
        }
    };
    let inside = BinaryMask::from_fn(gw, gh, |a, b| {
        let (x0, x1) = span(a);
        let (y0, y1) = span(b);
        pixel(x0, y0) && pixel(x1, y0) && pixel(x0, y1) && pixel(x1, y1)
    })
    .expect("lattice is nonempty");
    if inside.is_empty() {
        return 0.0;
    }
    let dt = squared_distance_transform(&inside);
    let max = dt.iter().copied().fold(0.0, f64::max);
    max.sqrt() + 0.5
}
