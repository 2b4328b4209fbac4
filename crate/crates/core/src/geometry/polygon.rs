use serde::{Deserialize, Serialize};

use super::{BoundingBox, GeometryError};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

/// A simple closed outline. The closing edge from the last vertex back to
/// the first is implicit; a repeated closing vertex is dropped on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: impl IntoIterator<Item = Point>) -> Result<Self, GeometryError> {
        let mut vertices: Vec<Point> = vertices.into_iter().collect();
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        let area = signed_area(&vertices);
        if area == 0.0 || !area.is_finite() {
            return Err(GeometryError::Empty("polygon has zero area"));
        }
        Ok(Self { vertices })
    }

    pub fn from_xy(points: &[(f64, f64)]) -> Result<Self, GeometryError> {
        Self::new(points.iter().copied().map(Point::from))
    }

    /// Axis-aligned rectangle with corners `(x0, y0)` and `(x1, y1)`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        Self::from_xy(&[(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Shoelace area, positive when the outline runs clockwise on screen
    /// (y pointing down).
    pub fn signed_area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> f64 {
        self.edges()
            .map(|(a, b)| (b.x - a.x).hypot(b.y - a.y))
            .sum()
    }

    /// Same outline with positive signed area.
    pub fn normalized(&self) -> Self {
        let mut vertices = self.vertices.clone();
        if self.signed_area() < 0.0 {
            vertices.reverse();
        }
        Self { vertices }
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn bounds(&self) -> BoundingBox {
        let mut b = BoundingBox {
            x0: f64::INFINITY,
            y0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for p in &self.vertices {
            b.x0 = b.x0.min(p.x);
            b.y0 = b.y0.min(p.y);
            b.x1 = b.x1.max(p.x);
            b.y1 = b.y1.max(p.y);
        }
        b
    }

    /// Applies `f` to every vertex. Fails if the result degenerates.
    pub fn map_points(&self, f: impl Fn(Point) -> Point) -> Result<Self, GeometryError> {
        Self::new(self.vertices.iter().copied().map(f))
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            vertices: self
                .vertices
                .iter()
                .map(|p| Point::new(p.x + dx, p.y + dy))
                .collect(),
        }
    }

    /// Even-odd containment test.
    pub fn contains(&self, p: Point) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) && p.x < crossing_x(a, b, p.y) {
                inside = !inside;
            }
        }
        inside
    }

    /// Sutherland-Hodgman clip against an axis-aligned rectangle. Returns
    /// `None` when nothing of positive area remains.
    pub fn clip_to_rect(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> Option<Self> {
        let mut pts = self.vertices.clone();
        let planes: [(fn(Point, f64) -> bool, fn(Point, Point, f64) -> Point, f64); 4] = [
            (|p, v| p.x >= v, |a, b, v| lerp_x(a, b, v), x0),
            (|p, v| p.x <= v, |a, b, v| lerp_x(a, b, v), x1),
            (|p, v| p.y >= v, |a, b, v| lerp_y(a, b, v), y0),
            (|p, v| p.y <= v, |a, b, v| lerp_y(a, b, v), y1),
        ];
        for (inside, cut, v) in planes {
            if pts.is_empty() {
                break;
            }
            let mut out = Vec::with_capacity(pts.len() + 4);
            for i in 0..pts.len() {
                let cur = pts[i];
                let prev = pts[(i + pts.len() - 1) % pts.len()];
                match (inside(prev, v), inside(cur, v)) {
                    (true, true) => out.push(cur),
                    (true, false) => out.push(cut(prev, cur, v)),
                    (false, true) => {
                        out.push(cut(prev, cur, v));
                        out.push(cur);
                    }
                    (false, false) => {}
                }
            }
            pts = out;
        }
        pts.dedup();
        Self::new(pts).ok()
    }
}

impl Polygon {
    /// Douglas-Peucker decimation of the closed outline: every dropped
    /// vertex lies within `tolerance` of the simplified outline. Falls back
    /// to the original when fewer than 3 vertices would remain.
    pub fn simplify(&self, tolerance: f64) -> Self {
        let v = &self.vertices;
        let n = v.len();
        if n <= 3 {
            return self.clone();
        }
        // Split the ring at vertex 0 and the vertex farthest from it.
        let far = (1..n)
            .max_by(|&a, &b| dist2(v[0], v[a]).total_cmp(&dist2(v[0], v[b])))
            .unwrap_or(n / 2);
        let mut keep = vec![false; n];
        keep[0] = true;
        keep[far] = true;
        let ring: Vec<Point> = v.iter().copied().chain(std::iter::once(v[0])).collect();
        mark(&ring, 0, far, tolerance, &mut keep);
        let mut tail = vec![false; n + 1];
        mark(&ring, far, n, tolerance, &mut tail);
        for (k, t) in keep.iter_mut().zip(&tail) {
            *k |= *t;
        }
        let kept: Vec<Point> = v.iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| *p).collect();
        Self::new(kept).unwrap_or_else(|_| self.clone())
    }
}

fn dist2(a: Point, b: Point) -> f64 {
    (a.x - b.x).powi(2) + (a.y - b.y).powi(2)
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return dist2(p, a).sqrt();
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    dist2(p, Point::new(a.x + t * dx, a.y + t * dy)).sqrt()
}

fn mark(pts: &[Point], i: usize, j: usize, tol: f64, keep: &mut [bool]) {
    let mut stack = vec![(i, j)];
    while let Some((i, j)) = stack.pop() {
        if j <= i + 1 {
            continue;
        }
        let (k, d) = (i + 1..j)
            .map(|k| (k, segment_distance(pts[k], pts[i], pts[j])))
            .fold((i, -1.0), |best, c| if c.1 > best.1 { c } else { best });
        if d > tol {
            keep[k] = true;
            stack.push((i, k));
            stack.push((k, j));
        }
    }
}

impl TryFrom<Vec<Point>> for Polygon {
    type Error = GeometryError;

    fn try_from(value: Vec<Point>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<Polygon> for Vec<Point> {
    fn from(value: Polygon) -> Self {
        value.vertices
    }
}

/// Absolute shoelace area of `polygon`.
pub fn polygon_area(polygon: &Polygon) -> f64 {
    polygon.area()
}

// Relative to the first vertex so that far-from-origin outlines keep precision.
fn signed_area(v: &[Point]) -> f64 {
    let Some(&o) = v.first() else { return 0.0 };
    let mut acc = 0.0;
    for w in v.windows(2) {
        let (ax, ay) = (w[0].x - o.x, w[0].y - o.y);
        let (bx, by) = (w[1].x - o.x, w[1].y - o.y);
        acc += ax * by - bx * ay;
    }
    acc * 0.5
}

/// x coordinate where edge `a`-`b` crosses the horizontal line at `y`.
#[inline]
pub(crate) fn crossing_x(a: Point, b: Point, y: f64) -> f64 {
    (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x
}

fn lerp_x(a: Point, b: Point, x: f64) -> Point {
    let t = (x - a.x) / (b.x - a.x);
    Point::new(x, a.y + t * (b.y - a.y))
}

fn lerp_y(a: Point, b: Point, y: f64) -> Point {
    let t = (y - a.y) / (b.y - a.y);
    Point::new(a.x + t * (b.x - a.x), y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplify_drops_collinear_and_bounds_error() {
        // Staircase approximation of a diagonal plus collinear points.
        let mut pts = vec![(0.0, 0.0), (5.0, 0.0), (10.0, 0.0)];
        for k in 0..10 {
            pts.push((10.0 - k as f64, 1.0 + k as f64));
            pts.push((9.0 - k as f64, 1.0 + k as f64));
        }
        let p = Polygon::from_xy(&pts).unwrap();
        let s = p.simplify(1.0);
        assert!(s.len() < p.len() / 2, "{} -> {}", p.len(), s.len());
        for &q in p.vertices() {
            let d = s.edges().map(|(a, b)| segment_distance(q, a, b)).fold(f64::MAX, f64::min);
            assert!(d <= 1.0 + 1e-12);
        }
        let tri = Polygon::from_xy(&[(0.0, 0.0), (4.0, 0.0), (0.0, 3.0)]).unwrap();
        assert_eq!(tri.simplify(10.0), tri);
    }
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_square_area() {
        let p = Polygon::rect(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(polygon_area(&p), 1.0);
    }

    #[test]
    fn ten_square_area() {
        let p = Polygon::from_xy(&[(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)]).unwrap();
        assert_eq!(polygon_area(&p), 100.0);
    }

    #[test]
    fn degenerate_polygons_rejected() {
        assert_eq!(
            Polygon::from_xy(&[(0.0, 0.0), (1.0, 1.0)]),
            Err(GeometryError::TooFewVertices(2))
        );
        assert!(matches!(
            Polygon::from_xy(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]),
            Err(GeometryError::Empty(_))
        ));
    }

    #[test]
    fn closing_vertex_dropped() {
        let p = Polygon::from_xy(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 0.0)]).unwrap();
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn normalization_makes_area_positive() {
        let p = Polygon::from_xy(&[(0.0, 0.0), (0.0, 3.0), (3.0, 3.0), (3.0, 0.0)]).unwrap();
        assert!(p.signed_area() < 0.0);
        assert_eq!(p.normalized().signed_area(), 9.0);
    }

    /// Fan triangulation from the centroid of the vertices, valid for convex
    /// polygons.
    fn fan_area(v: &[(f64, f64)]) -> f64 {
        let cx = v.iter().map(|p| p.0).sum::<f64>() / v.len() as f64;
        let cy = v.iter().map(|p| p.1).sum::<f64>() / v.len() as f64;
        let mut total = 0.0;
        for i in 0..v.len() {
            let (ax, ay) = v[i];
            let (bx, by) = v[(i + 1) % v.len()];
            // Heron's formula, independent of the cross product.
            let a = (ax - cx).hypot(ay - cy);
            let b = (bx - cx).hypot(by - cy);
            let c = (bx - ax).hypot(by - ay);
            let s = (a + b + c) / 2.0;
            total += (s * (s - a) * (s - b) * (s - c)).max(0.0).sqrt();
        }
        total
    }

    #[test]
    fn convex_12gon_matches_fan_triangulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let mut angles: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
            angles.sort_by(f64::total_cmp);
            let r = rng.random_range(5.0..50.0);
            let (cx, cy) = (rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0));
            let pts: Vec<(f64, f64)> = angles.iter().map(|a| (cx + r * a.cos(), cy + r * a.sin())).collect();
            let p = Polygon::from_xy(&pts).unwrap();
            let oracle = fan_area(&pts);
            assert!((polygon_area(&p) - oracle).abs() < 1e-9 * oracle.max(1.0), "{} vs {}", polygon_area(&p), oracle);
        }
    }

    #[test]
    fn clip_square_to_half() {
        let p = Polygon::rect(0.0, 0.0, 10.0, 10.0).unwrap();
        let c = p.clip_to_rect(5.0, -1.0, 20.0, 20.0).unwrap();
        assert!((c.area() - 50.0).abs() < 1e-12);
        assert!(p.clip_to_rect(11.0, 0.0, 20.0, 20.0).is_none());
    }

    proptest! {
        #[test]
        fn area_invariant_under_translation_and_quarter_turns(
            pts in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..10),
            dx in -1e3f64..1e3, dy in -1e3f64..1e3,
        ) {
            let Ok(p) = Polygon::from_xy(&pts) else { return Ok(()); };
            let a = p.area();
            let t = p.translate(dx, dy);
            prop_assert!((t.area() - a).abs() < 1e-9 * a.max(1.0) + 1e-9);
            let r = p.map_points(|q| Point::new(-q.y, q.x)).unwrap();
            prop_assert!((r.area() - a).abs() < 1e-9 * a.max(1.0));
        }
    }
}
