use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

/// How a path through the skeleton is turned into a length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthMode {
    /// Number of pixels on the path.
    #[default]
    PixelCount,
    /// One pixel for the start plus 1 per axial step and √2 per diagonal step.
    Euclidean,
}

/// One-pixel-wide medial representation of a mask.
///
/// Adjacency is 8-connectivity with redundant diagonals removed: two
/// diagonal neighbours are only linked when neither of their shared
/// 4-neighbours is part of the skeleton. This keeps L-shaped corners from
/// forming three-pixel cycles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skeleton {
    pixels: Vec<(usize, usize)>,
    index: HashMap<(usize, usize), usize>,
    adjacency: Vec<Vec<usize>>,
}

impl Skeleton {
    pub fn from_pixels(pixels: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut pixels: Vec<(usize, usize)> = pixels.into_iter().collect();
        pixels.sort_by_key(|&(x, y)| (y, x));
        pixels.dedup();
        let index: HashMap<_, _> = pixels.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        let has = |x: isize, y: isize| x >= 0 && y >= 0 && index.contains_key(&(x as usize, y as usize));
        let adjacency = pixels
            .iter()
            .map(|&(x, y)| {
                let (x, y) = (x as isize, y as isize);
                let mut out = Vec::new();
                for dy in -1..=1isize {
                    for dx in -1..=1isize {
                        if (dx, dy) == (0, 0) || !has(x + dx, y + dy) {
                            continue;
                        }
                        if dx != 0 && dy != 0 && (has(x + dx, y) || has(x, y + dy)) {
                            continue;
                        }
                        out.push(index[&((x + dx) as usize, (y + dy) as usize)]);
                    }
                }
                out.sort_unstable();
                out
            })
            .collect();
        Self { pixels, index, adjacency }
    }

    /// Pixels in raster order.
    pub fn pixels(&self) -> &[(usize, usize)] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn contains(&self, p: (usize, usize)) -> bool {
        self.index.contains_key(&p)
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// Indices of degree-1 pixels.
    pub fn endpoints(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.degree(i) == 1).collect()
    }

    /// No 2x2 block is fully contained.
    pub fn is_thin(&self) -> bool {
        self.pixels
            .iter()
            .all(|&(x, y)| !(self.contains((x + 1, y)) && self.contains((x, y + 1)) && self.contains((x + 1, y + 1))))
    }

    fn step_cost(&self, a: usize, b: usize, mode: LengthMode) -> f64 {
        let (pa, pb) = (self.pixels[a], self.pixels[b]);
        match mode {
            LengthMode::Euclidean if pa.0 != pb.0 && pa.1 != pb.1 => std::f64::consts::SQRT_2,
            _ => 1.0,
        }
    }

    /// Connected components as lists of pixel indices.
    fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.len()];
        let mut out = Vec::new();
        for s in 0..self.len() {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut k = 0;
            while k < comp.len() {
                for &n in &self.adjacency[comp[k]] {
                    if !seen[n] {
                        seen[n] = true;
                        comp.push(n);
                    }
                }
                k += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Shortest-path distances from `source`; returns the farthest pixel
    /// (lowest index on ties) and its distance.
    fn farthest(&self, source: usize, mode: LengthMode) -> (usize, f64) {
        let mut dist = vec![f64::INFINITY; self.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(State { cost: 0.0, node: source });
        while let Some(State { cost, node }) = heap.pop() {
            if cost > dist[node] {
                continue;
            }
            for &n in &self.adjacency[node] {
                let c = cost + self.step_cost(node, n, mode);
                if c < dist[n] {
                    dist[n] = c;
                    heap.push(State { cost: c, node: n });
                }
            }
        }
        let mut best = (source, 0.0);
        for (i, &d) in dist.iter().enumerate() {
            if d.is_finite() && d > best.1 + 1e-12 {
                best = (i, d);
            }
        }
        best
    }

    /// Removes terminal branches shorter than `min_len` pixels that hang off
    /// a junction. Branches of a junction-free path are never removed.
    pub fn prune_spurs(&self, min_len: usize) -> Skeleton {
        if min_len == 0 {
            return self.clone();
        }
        let mut removed = vec![false; self.len()];
        for end in self.endpoints() {
            let mut branch = vec![end];
            let mut prev = usize::MAX;
            let mut cur = end;
            let reached_junction = loop {
                let next: Vec<usize> = self.adjacency[cur].iter().copied().filter(|&n| n != prev).collect();
                if self.degree(cur) >= 3 && cur != end {
                    branch.pop();
                    break true;
                }
                match next.as_slice() {
                    [n] => {
                        prev = cur;
                        cur = *n;
                        branch.push(cur);
                        if branch.len() > min_len + 1 {
                            break false;
                        }
                    }
                    _ => break false,
                }
            };
            if reached_junction && branch.len() < min_len {
                for i in branch {
                    removed[i] = true;
                }
            }
        }
        Skeleton::from_pixels(
            self.pixels
                .iter()
                .enumerate()
                .filter(|(i, _)| !removed[*i])
                .map(|(_, &p)| p),
        )
    }
}

#[derive(PartialEq)]
struct State {
    cost: f64,
    node: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Longest route through a skeleton and the pixels it runs between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongestPath {
    /// Path length including the starting pixel.
    pub length: f64,
    pub ends: [(usize, usize); 2],
}

/// Longest simple path in the largest skeleton component, found by double
/// sweep from the first endpoint. Exact on trees; on cyclic skeletons up to
/// 64 further endpoints are tried and the best sweep is kept. `None` for an
/// empty skeleton.
pub fn longest_path(skeleton: &Skeleton, mode: LengthMode) -> Option<LongestPath> {
    let comp = skeleton
        .components()
        .into_iter()
        .max_by(|a, b| a.len().cmp(&b.len()).then(b[0].cmp(&a[0])))?;
    if comp.len() == 1 {
        let p = skeleton.pixels[comp[0]];
        return Some(LongestPath { length: 1.0, ends: [p, p] });
    }
    let endpoints: Vec<usize> = comp.iter().copied().filter(|&i| skeleton.degree(i) == 1).collect();
    let start = endpoints.first().copied().unwrap_or(comp[0]);
    let double_sweep = |s: usize| {
        let (u, _) = skeleton.farthest(s, mode);
        let (v, d) = skeleton.farthest(u, mode);
        (d, u, v)
    };
    let mut best = double_sweep(start);
    let edges: usize = comp.iter().map(|&i| skeleton.degree(i)).sum::<usize>() / 2;
    if edges >= comp.len() {
        for &e in endpoints.iter().skip(1).take(64) {
            let c = double_sweep(e);
            if c.0 > best.0 {
                best = c;
            }
        }
    }
    Some(LongestPath {
        length: best.0 + 1.0,
        ends: [skeleton.pixels[best.1], skeleton.pixels[best.2]],
    })
}

/// Length of [`longest_path`], 0 for an empty skeleton.
pub fn skeleton_length(skeleton: &Skeleton, mode: LengthMode) -> f64 {
    longest_path(skeleton, mode).map_or(0.0, |p| p.length)
}
