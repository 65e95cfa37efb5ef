//! 2D geometry primitives shared across the crate: points, polygons,
//! ray casting against rectangles and convex polygon clipping.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

/// A 2D point or vector in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product; sign gives the turn direction.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn distance_sq(self, other: Vec2) -> f64 {
        (self - other).norm_sq()
    }

    pub fn distance(self, other: Vec2) -> f64 {
        self.distance_sq(other).sqrt()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A simple polygon in world coordinates, vertices in order (either winding).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Polygon {
    pub vertices: Vec<Vec2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Vec2>) -> Self {
        Self { vertices }
    }

    pub fn from_points(pts: &[[f64; 2]]) -> Self {
        Self::new(pts.iter().map(|&p| Vec2::from(p)).collect())
    }

    /// Axis-aligned rectangle [x0,x1] x [y0,y1].
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::from_points(&[[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    /// Even-odd rule point-in-polygon test. Points exactly on an edge may
    /// fall on either side; callers should not rely on boundary behavior.
    pub fn contains(&self, p: Vec2) -> bool {
        let v = &self.vertices;
        let n = v.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (v[i], v[j]);
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    /// True if no two non-adjacent edges intersect and no edge is degenerate.
    pub fn is_simple(&self) -> bool {
        let v = &self.vertices;
        let n = v.len();
        if n < 3 {
            return false;
        }
        for i in 0..n {
            if v[i].distance_sq(v[(i + 1) % n]) == 0.0 {
                return false;
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                // Skip adjacent edges (sharing a vertex), including the wrap pair.
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (a1, a2) = (v[i], v[(i + 1) % n]);
                let (b1, b2) = (v[j], v[(j + 1) % n]);
                if segments_intersect(a1, a2, b1, b2) {
                    return false;
                }
            }
        }
        true
    }

    pub fn translated(&self, offset: Vec2) -> Polygon {
        Polygon::new(self.vertices.iter().map(|&v| v + offset).collect())
    }

    pub fn rotated(&self, angle: f64) -> Polygon {
        Polygon::new(self.vertices.iter().map(|&v| v.rotated(angle)).collect())
    }
}

impl From<Vec<[f64; 2]>> for Polygon {
    fn from(pts: Vec<[f64; 2]>) -> Self {
        Polygon::new(pts.into_iter().map(Vec2::from).collect())
    }
}

impl From<Polygon> for Vec<[f64; 2]> {
    fn from(p: Polygon) -> Self {
        p.vertices.into_iter().map(<[f64; 2]>::from).collect()
    }
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

/// Proper or touching intersection of closed segments a1-a2 and b1-b2.
pub fn segments_intersect(a1: Vec2, a2: Vec2, b1: Vec2, b2: Vec2) -> bool {
    let d1 = orient(b1, b2, a1);
    let d2 = orient(b1, b2, a2);
    let d3 = orient(a1, a2, b1);
    let d4 = orient(a1, a2, b2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: Vec2, q: Vec2, r: Vec2| {
        orient(p, q, r) == 0.0
            && r.x >= p.x.min(q.x)
            && r.x <= p.x.max(q.x)
            && r.y >= p.y.min(q.y)
            && r.y <= p.y.max(q.y)
    };
    on(b1, b2, a1) || on(b1, b2, a2) || on(a1, a2, b1) || on(a1, a2, b2)
}

/// Distance along the ray (origin, unit direction) to the closed segment
/// a-b, or `None` if the ray misses it. Hits at t <= 1e-12 are ignored so
/// a ray starting on a boundary does not self-intersect.
pub fn ray_segment_distance(origin: Vec2, dir: Vec2, a: Vec2, b: Vec2) -> Option<f64> {
    let seg = b - a;
    let denom = dir.cross(seg);
    if denom.abs() < 1e-15 {
        return None; // parallel: grazing hits are picked up by the adjacent edges
    }
    let diff = a - origin;
    let t = diff.cross(seg) / denom;
    let s = diff.cross(dir) / denom;
    if t > 1e-12 && (0.0..=1.0).contains(&s) {
        Some(t)
    } else {
        None
    }
}

/// Signed area of a polygon (shoelace); positive for counterclockwise order.
pub fn signed_area(vertices: &[Vec2]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        acc += vertices[i].cross(vertices[(i + 1) % n]);
    }
    acc / 2.0
}

/// Area of the intersection of two convex polygons (Sutherland-Hodgman).
/// Both inputs must be convex; vertex order may be either winding.
pub fn convex_intersection_area(subject: &[Vec2], clip: &[Vec2]) -> f64 {
    let mut clip = clip.to_vec();
    if signed_area(&clip) < 0.0 {
        clip.reverse();
    }
    let mut poly = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if poly.len() < 3 {
            return 0.0;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let mut out = Vec::with_capacity(poly.len() + 1);
        let m = poly.len();
        for j in 0..m {
            let cur = poly[j];
            let next = poly[(j + 1) % m];
            let cur_in = orient(a, b, cur) >= 0.0;
            let next_in = orient(a, b, next) >= 0.0;
            if cur_in {
                out.push(cur);
            }
            if cur_in != next_in {
                let edge = next - cur;
                let denom = (b - a).cross(edge);
                if denom.abs() > 1e-15 {
                    // Solve orient(a, b, cur + t*edge) = 0 for t.
                    let t = -(b - a).cross(cur - a) / denom;
                    out.push(cur + edge * t.clamp(0.0, 1.0));
                }
            }
        }
        poly = out;
    }
    signed_area(&poly).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_in_square() {
        let sq = Polygon::rect(0.0, 0.0, 2.0, 2.0);
        assert!(sq.contains(Vec2::new(1.0, 1.0)));
        assert!(!sq.contains(Vec2::new(3.0, 1.0)));
        assert!(!sq.contains(Vec2::new(-0.1, 1.0)));
    }

    #[test]
    fn point_in_rotated_square() {
        // Unit square rotated 45 degrees about its center (0.5, 0.5).
        let center = Vec2::new(0.5, 0.5);
        let sq = Polygon::rect(0.0, 0.0, 1.0, 1.0)
            .translated(-center)
            .rotated(std::f64::consts::FRAC_PI_4)
            .translated(center);
        assert!(sq.contains(center));
        // Original corner is outside after rotation (diamond shape).
        assert!(!sq.contains(Vec2::new(0.95, 0.95)));
        assert!(sq.contains(Vec2::new(0.5, 1.1)));
    }

    #[test]
    fn simple_polygon_detection() {
        assert!(Polygon::rect(0.0, 0.0, 1.0, 1.0).is_simple());
        // Bowtie: self-intersecting.
        let bowtie = Polygon::from_points(&[[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!(!bowtie.is_simple());
        // Degenerate: fewer than 3 vertices.
        assert!(!Polygon::from_points(&[[0.0, 0.0], [1.0, 0.0]]).is_simple());
    }

    #[test]
    fn ray_hits_segment() {
        let t = ray_segment_distance(
            Vec2::ZERO,
            Vec2::new(1.0, 0.0),
            Vec2::new(5.0, -1.0),
            Vec2::new(5.0, 1.0),
        );
        assert!((t.unwrap() - 5.0).abs() < 1e-12);
        // Pointing away.
        let miss = ray_segment_distance(
            Vec2::ZERO,
            Vec2::new(-1.0, 0.0),
            Vec2::new(5.0, -1.0),
            Vec2::new(5.0, 1.0),
        );
        assert!(miss.is_none());
    }

    #[test]
    fn intersection_area_half_overlap() {
        let a = Polygon::rect(0.0, 0.0, 1.0, 1.0);
        let b = Polygon::rect(0.5, 0.0, 1.5, 1.0);
        let area = convex_intersection_area(&a.vertices, &b.vertices);
        assert!((area - 0.5).abs() < 1e-12);
    }

    #[test]
    fn intersection_area_disjoint() {
        let a = Polygon::rect(0.0, 0.0, 1.0, 1.0);
        let b = Polygon::rect(2.0, 2.0, 3.0, 3.0);
        assert_eq!(convex_intersection_area(&a.vertices, &b.vertices), 0.0);
    }

    #[test]
    fn intersection_area_winding_independent() {
        let a = Polygon::rect(0.0, 0.0, 2.0, 2.0);
        let mut b = Polygon::rect(1.0, 1.0, 3.0, 3.0);
        let area_ccw = convex_intersection_area(&a.vertices, &b.vertices);
        b.vertices.reverse();
        let area_cw = convex_intersection_area(&a.vertices, &b.vertices);
        assert!((area_ccw - 1.0).abs() < 1e-12);
        assert!((area_cw - 1.0).abs() < 1e-12);
    }
}
