//! Planar geometry: vectors, polygons, segment predicates.

use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used by boundary-inclusive predicates, in meters.
pub const BOUNDARY_EPS: f64 = 1e-9;

/// A point or displacement in the plane, in meters. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Vec2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Vec2 { x, y }
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    /// Unit vector at `deg` degrees counter-clockwise from +x.
    pub fn from_angle_deg(deg: f64) -> Self {
        let r = deg.to_radians();
        Vec2::new(libm::cos(r), libm::sin(r))
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        libm::hypot(self.x, self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn manhattan(self, o: Vec2) -> f64 {
        libm::fabs(self.x - o.x) + libm::fabs(self.y - o.y)
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    /// Counter-clockwise perpendicular.
    pub fn left_normal(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Counter-clockwise angle from `self` to `other`, in degrees within `[0, 360)`.
    ///
    /// Zero-length inputs yield 0.
    pub fn angle_to_deg(self, other: Vec2) -> f64 {
        let a = libm::atan2(self.cross(other), self.dot(other)).to_degrees();
        let a = if a < 0.0 { a + 360.0 } else { a };
        if a >= 360.0 {
            0.0
        } else {
            a
        }
    }

    /// Rotate counter-clockwise by `deg` degrees.
    pub fn rotated_deg(self, deg: f64) -> Vec2 {
        let r = deg.to_radians();
        let (s, c) = (libm::sin(r), libm::cos(r));
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl From<(f64, f64)> for Vec2 {
    fn from((x, y): (f64, f64)) -> Self {
        Vec2::new(x, y)
    }
}

/// Sign of the turn a→b→c: positive for counter-clockwise.
pub fn orientation(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment_collinear(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// True iff the closed segments `a1a2` and `b1b2` share at least one point.
///
/// Collinear overlap counts; zero-length segments behave as points.
pub fn segments_intersect(a1: Vec2, a2: Vec2, b1: Vec2, b2: Vec2) -> bool {
    let d1 = orientation(b1, b2, a1);
    let d2 = orientation(b1, b2, a2);
    let d3 = orientation(a1, a2, b1);
    let d4 = orientation(a1, a2, b2);

    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment_collinear(b1, b2, a1))
        || (d2 == 0.0 && on_segment_collinear(b1, b2, a2))
        || (d3 == 0.0 && on_segment_collinear(a1, a2, b1))
        || (d4 == 0.0 && on_segment_collinear(a1, a2, b2))
}

/// Closest point to `p` on the segment `ab`.
pub fn closest_point_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let ab = b - a;
    let len2 = ab.norm_sq();
    if len2 == 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    p.distance(closest_point_on_segment(p, a, b))
}

/// Parameter `t` along `p + t (q - p)` where it meets the line through `ab`,
/// restricted to proper hits on both segments. Collinear pairs yield the
/// projections of the overlap endpoints.
fn segment_hit_params(p: Vec2, q: Vec2, a: Vec2, b: Vec2, out: &mut Vec<f64>) {
    let r = q - p;
    let s = b - a;
    let denom = r.cross(s);
    let len2 = r.norm_sq();
    if len2 == 0.0 {
        return;
    }
    if denom == 0.0 {
        if (a - p).cross(r) == 0.0 {
            for e in [a, b] {
                let t = (e - p).dot(r) / len2;
                if (0.0..=1.0).contains(&t) {
                    out.push(t);
                }
            }
        }
        return;
    }
    let t = (a - p).cross(s) / denom;
    let u = (a - p).cross(r) / denom;
    if (0.0..=1.0).contains(&t) && (-1e-12..=1.0 + 1e-12).contains(&u) {
        out.push(t);
    }
}

/// A simple closed polygon. The closing edge from the last vertex back to the
/// first is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon {
    vertices: Vec<Vec2>,
}

impl Polygon {
    /// Builds a polygon, rejecting fewer than three vertices or non-finite
    /// coordinates. Self-intersection is checked by [`Polygon::is_simple`].
    pub fn new(vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidScene("polygon needs at least 3 vertices".into()));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidScene("polygon has a non-finite vertex".into()));
        }
        Ok(Polygon { vertices })
    }

    /// Axis-aligned rectangle.
    pub fn rect(min: Vec2, max: Vec2) -> Self {
        Polygon {
            vertices: alloc::vec![
                min,
                Vec2::new(max.x, min.y),
                max,
                Vec2::new(min.x, max.y)
            ],
        }
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace area; positive when vertices run counter-clockwise.
    pub fn signed_area(&self) -> f64 {
        self.edges().map(|(a, b)| a.cross(b)).sum::<f64>() / 2.0
    }

    /// No two non-adjacent edges touch, and adjacent edges meet only at
    /// their shared vertex.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        let edges: Vec<(Vec2, Vec2)> = self.edges().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (a1, a2) = edges[i];
                let (b1, b2) = edges[j];
                if adjacent {
                    // Folding back onto the neighbour edge.
                    let shared = if j == i + 1 { a2 } else { a1 };
                    let (p, q) = if j == i + 1 { (a1, b2) } else { (a2, b1) };
                    if orientation(p, shared, q) == 0.0
                        && (p - shared).dot(q - shared) > 0.0
                    {
                        return false;
                    }
                    continue;
                }
                if segments_intersect(a1, a2, b1, b2) {
                    return false;
                }
            }
        }
        true
    }

    pub fn on_boundary(&self, p: Vec2) -> bool {
        self.edges()
            .any(|(a, b)| point_segment_distance(p, a, b) <= BOUNDARY_EPS)
    }

    /// Even-odd containment; boundary points count as inside.
    pub fn contains(&self, p: Vec2) -> bool {
        self.on_boundary(p) || self.contains_even_odd(p)
    }

    /// Inside and not on the boundary.
    pub fn contains_strictly(&self, p: Vec2) -> bool {
        !self.on_boundary(p) && self.contains_even_odd(p)
    }

    fn contains_even_odd(&self, p: Vec2) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Nearest boundary point to `p` together with the index of its edge.
    pub fn nearest_boundary_point(&self, p: Vec2) -> (Vec2, usize) {
        let mut best = (self.vertices[0], 0usize, f64::INFINITY);
        for (i, (a, b)) in self.edges().enumerate() {
            let c = closest_point_on_segment(p, a, b);
            let d = p.distance(c);
            if d < best.2 {
                best = (c, i, d);
            }
        }
        (best.0, best.1)
    }

    /// Outward unit normal of edge `i`.
    pub fn outward_normal(&self, i: usize) -> Vec2 {
        let n = self.vertices.len();
        let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
        let d = (b - a).normalized().unwrap_or(Vec2::new(1.0, 0.0));
        // Interior lies to the left of counter-clockwise edges.
        if self.signed_area() >= 0.0 {
            Vec2::new(d.y, -d.x)
        } else {
            Vec2::new(-d.y, d.x)
        }
    }

    /// True iff some part of the closed segment `pq` lies strictly inside.
    ///
    /// The segment is split at every boundary crossing and each piece is
    /// probed at its midpoint, so grazing a vertex or running along an edge
    /// does not count.
    pub fn segment_enters_interior(&self, p: Vec2, q: Vec2) -> bool {
        if p == q {
            return self.contains_strictly(p);
        }
        let mut ts: Vec<f64> = alloc::vec![0.0, 1.0];
        for (a, b) in self.edges() {
            segment_hit_params(p, q, a, b, &mut ts);
        }
        ts.sort_by(|a, b| a.total_cmp(b));
        ts.dedup();
        ts.windows(2).any(|w| {
            let m = p + (q - p) * ((w[0] + w[1]) / 2.0);
            self.contains_strictly(m)
        })
    }

    /// Vertices pushed outward by `clearance`, keeping edges parallel to the
    /// originals (miter offset). Clearance zero returns the polygon unchanged.
    pub fn inflated(&self, clearance: f64) -> Vec<Vec2> {
        if clearance == 0.0 {
            return self.vertices.clone();
        }
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let n_prev = self.outward_normal((i + n - 1) % n);
                let n_next = self.outward_normal(i);
                let denom = 1.0 + n_prev.dot(n_next);
                let offset = if denom > 1e-6 {
                    (n_prev + n_next) * (clearance / denom)
                } else {
                    n_next * clearance
                };
                self.vertices[i] + offset
            })
            .collect()
    }
}

/// True iff `p` lies inside `zone` or on its boundary (even-odd rule).
pub fn point_in_zone(p: Vec2, zone: &[Vec2]) -> Result<bool> {
    if zone.len() < 3 {
        return Err(Error::InvalidScene("zone needs at least 3 vertices".into()));
    }
    let poly = Polygon {
        vertices: zone.to_vec(),
    };
    Ok(poly.contains(p))
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Rect { min, max }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x - BOUNDARY_EPS
            && p.x <= self.max.x + BOUNDARY_EPS
            && p.y >= self.min.y - BOUNDARY_EPS
            && p.y <= self.max.y + BOUNDARY_EPS
    }

    pub fn is_valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min.x < self.max.x && self.min.y < self.max.y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn unit_square() -> Vec<Vec2> {
        vec![
            Vec2::new(-0.5, -0.5),
            Vec2::new(0.5, -0.5),
            Vec2::new(0.5, 0.5),
            Vec2::new(-0.5, 0.5),
        ]
    }

    #[test]
    fn zone_membership() {
        assert!(point_in_zone(Vec2::new(0.0, 0.0), &unit_square()).unwrap());
        assert!(!point_in_zone(Vec2::new(5.0, 5.0), &unit_square()).unwrap());
        assert!(point_in_zone(Vec2::new(0.5, 0.0), &unit_square()).unwrap());
        assert!(point_in_zone(Vec2::new(0.5, 0.5), &unit_square()).unwrap());
    }

    #[test]
    fn degenerate_zone_rejected() {
        let z = [Vec2::ZERO, Vec2::new(1.0, 0.0)];
        assert!(matches!(point_in_zone(Vec2::ZERO, &z), Err(Error::InvalidScene(_))));
    }

    #[test]
    fn segment_cases() {
        let v = Vec2::new;
        assert!(segments_intersect(v(0., 0.), v(2., 0.), v(1., -1.), v(1., 1.)));
        assert!(!segments_intersect(v(0., 0.), v(1., 0.), v(0., 1.), v(1., 1.)));
        assert!(segments_intersect(v(0., 0.), v(2., 0.), v(1., 0.), v(3., 0.)));
        assert!(!segments_intersect(v(0., 0.), v(1., 0.), v(2., 0.), v(3., 0.)));
        // touching at an endpoint
        assert!(segments_intersect(v(0., 0.), v(1., 0.), v(1., 0.), v(1., 5.)));
        // point segments
        assert!(segments_intersect(v(1., 0.), v(1., 0.), v(0., 0.), v(2., 0.)));
        assert!(!segments_intersect(v(1., 1.), v(1., 1.), v(0., 0.), v(2., 0.)));
    }

    #[test]
    fn interior_probe() {
        let sq = Polygon::rect(Vec2::new(0., 0.), Vec2::new(1., 1.));
        // diagonal
        assert!(sq.segment_enters_interior(Vec2::new(0., 0.), Vec2::new(1., 1.)));
        // along an edge
        assert!(!sq.segment_enters_interior(Vec2::new(0., 0.), Vec2::new(1., 0.)));
        // grazing a corner from outside
        assert!(!sq.segment_enters_interior(Vec2::new(-1., 1.), Vec2::new(1., -1.)));
        // straight through
        assert!(sq.segment_enters_interior(Vec2::new(-1., 0.5), Vec2::new(2., 0.5)));
    }

    #[test]
    fn self_intersection_detected() {
        let bow = Polygon::new(vec![
            Vec2::new(0., 0.),
            Vec2::new(1., 1.),
            Vec2::new(1., 0.),
            Vec2::new(0., 1.),
        ])
        .unwrap();
        assert!(!bow.is_simple());
        assert!(Polygon::rect(Vec2::ZERO, Vec2::new(2., 1.)).is_simple());
    }

    #[test]
    fn inflation_keeps_distance() {
        let sq = Polygon::rect(Vec2::new(4., -1.), Vec2::new(6., 1.));
        let inf = sq.inflated(0.3);
        assert!((inf[0].x - 3.7).abs() < 1e-12 && (inf[0].y + 1.3).abs() < 1e-12);
        assert!((inf[2].x - 6.3).abs() < 1e-12 && (inf[2].y - 1.3).abs() < 1e-12);
    }

    #[test]
    fn angles() {
        let e = Vec2::new(1.0, 0.0);
        assert!((e.angle_to_deg(Vec2::new(0.0, 1.0)) - 90.0).abs() < 1e-12);
        assert!((e.angle_to_deg(Vec2::new(0.0, -1.0)) - 270.0).abs() < 1e-12);
        assert_eq!(e.angle_to_deg(e), 0.0);
    }
}
