use crate::geometry::{largest_component, BinaryMask};

use super::{distance::squared_distance_transform, MorphometryError, Skeleton};

/// Padded working grid so that neighbourhood lookups never bounds-check.
struct Grid {
    w: usize,
    cells: Vec<u8>,
}

impl Grid {
    fn from_mask(mask: &BinaryMask) -> Self {
        let (w, h) = (mask.width() + 2, mask.height() + 2);
        let mut cells = vec![0u8; w * h];
        for (x, y) in mask.foreground() {
            cells[(y + 1) * w + x + 1] = 1;
        }
        Self { w, cells }
    }

    /// Neighbours P2..P9 clockwise from north: N, NE, E, SE, S, SW, W, NW.
    #[inline]
    fn ring(&self, i: usize) -> [u8; 8] {
        let w = self.w;
        let c = &self.cells;
        [c[i - w], c[i - w + 1], c[i + 1], c[i + w + 1], c[i + w], c[i + w - 1], c[i - 1], c[i - w - 1]]
    }

    fn foreground(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells.iter().enumerate().filter(|(_, &v)| v != 0).map(|(i, _)| i)
    }
}

fn transitions(p: &[u8; 8]) -> usize {
    (0..8).filter(|&k| p[k] == 0 && p[(k + 1) % 8] == 1).count()
}

/// Yokoi connectivity number for 8-connected foreground. A pixel whose
/// removal preserves local topology has value 1.
fn connectivity8(p: &[u8; 8]) -> u8 {
    // Reorder to E, NE, N, NW, W, SW, S, SE and complement.
    let q = [p[2], p[1], p[0], p[7], p[6], p[5], p[4], p[3]].map(|v| 1 - v);
    let mut n = 0;
    for k in [0, 2, 4, 6] {
        n += q[k] - q[k] * q[(k + 1) % 8] * q[(k + 2) % 8];
    }
    n
}

/// Zhang-Suen two-subiteration thinning until stable.
fn zhang_suen(g: &mut Grid) {
    let mut candidates: Vec<usize> = g.foreground().collect();
    let mut marked = Vec::new();
    loop {
        let mut changed = false;
        for step in 0..2 {
            marked.clear();
            for &i in &candidates {
                if g.cells[i] == 0 {
                    continue;
                }
                let p = g.ring(i);
                let b: u8 = p.iter().sum();
                if !(2..=6).contains(&b) || transitions(&p) != 1 {
                    continue;
                }
                let (n, e, s, w) = (p[0], p[2], p[4], p[6]);
                let ok = if step == 0 {
                    n * e * s == 0 && e * s * w == 0
                } else {
                    n * e * w == 0 && n * s * w == 0
                };
                if ok {
                    marked.push(i);
                }
            }
            for &i in &marked {
                g.cells[i] = 0;
            }
            changed |= !marked.is_empty();
        }
        candidates.retain(|&i| g.cells[i] != 0);
        if !changed {
            break;
        }
    }
}

/// Removes the corner pixel of every L-shaped step where the two arms stay
/// 8-connected without it. Leaves a staircase-free, 8-minimal path.
fn remove_staircases(g: &mut Grid) {
    loop {
        let mut changed = false;
        let pixels: Vec<usize> = g.foreground().collect();
        for i in pixels {
            let p = g.ring(i);
            let (n, e, s, w) = (p[0], p[2], p[4], p[6]);
            let corner = (n & e) | (e & s) | (s & w) | (w & n);
            if corner == 1 && connectivity8(&p) == 1 {
                g.cells[i] = 0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Last resort for 2x2 blocks that no topology-preserving deletion can
/// break: drop the block pixel with the fewest neighbours.
fn break_blocks(g: &mut Grid) {
    let w = g.w;
    loop {
        let block = g
            .foreground()
            .find(|&i| g.cells[i + 1] == 1 && g.cells[i + w] == 1 && g.cells[i + w + 1] == 1);
        let Some(i) = block else { break };
        let victim = [i, i + 1, i + w, i + w + 1]
            .into_iter()
            .min_by_key(|&j| (g.ring(j).iter().sum::<u8>(), j))
            .expect("four candidates");
        g.cells[victim] = 0;
    }
}

/// Thins the largest 8-connected component of `mask` to a one-pixel-wide
/// skeleton.
pub fn thin(mask: &BinaryMask) -> Result<Skeleton, MorphometryError> {
    let comp = largest_component(mask).map_err(|_| MorphometryError::EmptyMask)?;
    let mut g = Grid::from_mask(&comp);
    zhang_suen(&mut g);
    remove_staircases(&mut g);
    break_blocks(&mut g);

    let gw = g.w;
    let mut pixels: Vec<(usize, usize)> = g.foreground().map(|i| (i % gw - 1, i / gw - 1)).collect();
    if pixels.is_empty() {
        // Two-pixel-thick blobs can vanish entirely; keep the most interior pixel.
        let dt = squared_distance_transform(&comp);
        let best = comp
            .foreground()
            .max_by(|a, b| {
                let da = dt[a.1 * comp.width() + a.0];
                let db = dt[b.1 * comp.width() + b.0];
                da.total_cmp(&db).then(b.1.cmp(&a.1)).then(b.0.cmp(&a.0))
            })
            .expect("component is nonempty");
        pixels.push(best);
    }
    Ok(Skeleton::from_pixels(pixels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rasterize, Polygon};

    fn filled(w: usize, h: usize, rect: (usize, usize, usize, usize)) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| x >= rect.0 && x < rect.0 + rect.2 && y >= rect.1 && y < rect.1 + rect.3).unwrap()
    }

    /// Plain Zhang-Suen on a Vec<Vec<u8>>, transcribed from the original
    /// formulation. Used to check that the fast path peels identically.
    fn reference_zhang_suen(mask: &BinaryMask) -> Vec<(usize, usize)> {
        let (w, h) = (mask.width() as i64, mask.height() as i64);
        let mut img = vec![vec![0u8; w as usize]; h as usize];
        for (x, y) in mask.foreground() {
            img[y][x] = 1;
        }
        let at = |img: &Vec<Vec<u8>>, x: i64, y: i64| -> u8 {
            if x < 0 || y < 0 || x >= w || y >= h {
                0
            } else {
                img[y as usize][x as usize]
            }
        };
        loop {
            let mut any = false;
            for pass in 0..2 {
                let mut del = vec![];
                for y in 0..h {
                    for x in 0..w {
                        if img[y as usize][x as usize] == 0 {
                            continue;
                        }
                        let p2 = at(&img, x, y - 1);
                        let p3 = at(&img, x + 1, y - 1);
                        let p4 = at(&img, x + 1, y);
                        let p5 = at(&img, x + 1, y + 1);
                        let p6 = at(&img, x, y + 1);
                        let p7 = at(&img, x - 1, y + 1);
                        let p8 = at(&img, x - 1, y);
                        let p9 = at(&img, x - 1, y - 1);
                        let seq = [p2, p3, p4, p5, p6, p7, p8, p9, p2];
                        let b: u8 = seq[..8].iter().sum();
                        let a = seq.windows(2).filter(|w| w[0] == 0 && w[1] == 1).count();
                        let c = if pass == 0 { p2 * p4 * p6 == 0 && p4 * p6 * p8 == 0 } else { p2 * p4 * p8 == 0 && p2 * p6 * p8 == 0 };
                        if (2..=6).contains(&b) && a == 1 && c {
                            del.push((x as usize, y as usize));
                        }
                    }
                }
                any |= !del.is_empty();
                for (x, y) in del {
                    img[y][x] = 0;
                }
            }
            if !any {
                break;
            }
        }
        let mut out = vec![];
        for y in 0..h as usize {
            for x in 0..w as usize {
                if img[y][x] == 1 {
                    out.push((x, y));
                }
            }
        }
        out
    }

    fn assert_skeleton_invariants(mask: &BinaryMask, s: &Skeleton) {
        assert!(!s.is_empty());
        for &(x, y) in s.pixels() {
            assert!(mask.get(x, y), "skeleton pixel ({x},{y}) outside mask");
        }
        assert!(s.is_thin(), "2x2 block in skeleton");
    }

    #[test]
    fn single_pixel_is_fixed_point() {
        let m = filled(5, 5, (2, 2, 1, 1));
        let s = thin(&m).unwrap();
        assert_eq!(s.pixels(), &[(2, 2)]);
    }

    #[test]
    fn three_by_three_square_collapses_to_center() {
        let m = filled(7, 7, (2, 2, 3, 3));
        assert_eq!(reference_zhang_suen(&m), vec![(3, 3)]);
        let s = thin(&m).unwrap();
        assert_eq!(s.pixels(), &[(3, 3)]);
    }

    #[test]
    fn two_by_two_block_keeps_one_pixel() {
        let m = filled(6, 6, (2, 2, 2, 2));
        // The classic scheme erases 2x2 blocks completely.
        assert!(reference_zhang_suen(&m).is_empty());
        let s = thin(&m).unwrap();
        assert_eq!(s.len(), 1);
        assert_skeleton_invariants(&m, &s);
    }

    #[test]
    fn horizontal_bar_thins_to_near_horizontal_path() {
        let m = filled(220, 40, (10, 10, 200, 20));
        let s = thin(&m).unwrap();
        assert_skeleton_invariants(&m, &s);
        // Every reference pixel survives unless it was a staircase corner.
        let reference = reference_zhang_suen(&m);
        for p in s.pixels() {
            assert!(reference.contains(p));
        }
        let ys: Vec<usize> = s.pixels().iter().map(|p| p.1).collect();
        let (lo, hi) = (ys.iter().min().unwrap(), ys.iter().max().unwrap());
        let xs: Vec<usize> = s.pixels().iter().map(|p| p.0).collect();
        let span = xs.iter().max().unwrap() - xs.iter().min().unwrap() + 1;
        assert!(span >= 170, "span {span}");
        assert!(hi - lo <= 19);
        let core: Vec<_> = s.pixels().iter().filter(|p| p.0 > 40 && p.0 < 180).collect();
        assert!(core.iter().all(|p| p.1 == 19 || p.1 == 20));
    }

    #[test]
    fn rotated_bar_invariants() {
        for deg in [0.0f64, 17.0, 45.0, 60.0, 90.0] {
            let (c, s) = (deg.to_radians().cos(), deg.to_radians().sin());
            let pts: Vec<(f64, f64)> = [(-80.0, -8.0), (80.0, -8.0), (80.0, 8.0), (-80.0, 8.0)]
                .iter()
                .map(|&(x, y)| (100.0 + x * c - y * s, 100.0 + x * s + y * c))
                .collect();
            let m = rasterize(&Polygon::from_xy(&pts).unwrap(), 200, 200).unwrap();
            let sk = thin(&m).unwrap();
            assert_skeleton_invariants(&m, &sk);
        }
    }

    #[test]
    fn empty_mask_errors() {
        let m = BinaryMask::new(4, 4).unwrap();
        assert!(matches!(thin(&m), Err(MorphometryError::EmptyMask)));
    }

    #[test]
    fn connectivity_number_examples() {
        // Only N and E set (L corner arms): removable.
        assert_eq!(connectivity8(&[1, 0, 1, 0, 0, 0, 0, 0]), 1);
        // N and S: a bridge, not removable.
        assert_eq!(connectivity8(&[1, 0, 0, 0, 1, 0, 0, 0]), 2);
        // Isolated pixel.
        assert_eq!(connectivity8(&[0; 8]), 0);
    }
}
