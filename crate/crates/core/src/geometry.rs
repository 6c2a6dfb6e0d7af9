//! Planar geometry used by the simulator: points, polygons, oriented
//! rectangles and the intersection predicates collision checks and ray
//! casting are built on.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Tolerance for contact tests. Touching within this distance is not overlap.
pub const CONTACT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Closed polygon given by its vertices in order; the closing edge is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<Vec2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Vec2>) -> Self {
        Self { vertices }
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace area, positive for counter-clockwise vertex order.
    pub fn signed_area(&self) -> f64 {
        self.edges().map(|(a, b)| a.cross(b)).sum::<f64>() * 0.5
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Crossing-number test. Points on the boundary may go either way; use
    /// [`Polygon::distance_to_boundary`] where that matters.
    pub fn contains(&self, p: Vec2) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let t = (p.y - a.y) / (b.y - a.y);
                if p.x < a.x + t * (b.x - a.x) {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Inside or within `tol` of the boundary.
    pub fn contains_closed(&self, p: Vec2, tol: f64) -> bool {
        self.contains(p) || self.distance_to_boundary(p) <= tol
    }

    pub fn distance_to_boundary(&self, p: Vec2) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// True when no two non-adjacent edges touch.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        let edges: Vec<_> = self.edges().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                let (a, b) = edges[i];
                let (c, d) = edges[j];
                if segments_touch(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    pub fn transformed(&self, rotation: f64, translation: Vec2) -> Polygon {
        Polygon::new(
            self.vertices
                .iter()
                .map(|v| v.rotate(rotation) + translation)
                .collect(),
        )
    }
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

/// Closed segment intersection (touching counts).
pub fn segments_touch(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: Vec2, q: Vec2, r: Vec2| point_segment_distance(r, p, q) <= CONTACT_EPS;
    on(c, d, a) || on(c, d, b) || on(a, b, c) || on(a, b, d)
}

/// Distance along the ray `origin + t·dir` (|dir| = 1) to segment `ab`, if hit.
pub fn ray_segment(origin: Vec2, dir: Vec2, a: Vec2, b: Vec2) -> Option<f64> {
    let e = b - a;
    let denom = dir.cross(e);
    if denom.abs() < 1e-15 {
        return None;
    }
    let w = a - origin;
    let t = w.cross(e) / denom;
    let u = w.cross(dir) / denom;
    if t >= 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u) {
        Some(t)
    } else {
        None
    }
}

/// Rectangle with arbitrary orientation, described by its center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: Vec2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    /// Corners in counter-clockwise order starting rear-right.
    pub fn corners(&self) -> [Vec2; 4] {
        let hl = 0.5 * self.length;
        let hw = 0.5 * self.width;
        [
            Vec2::new(-hl, -hw),
            Vec2::new(hl, -hw),
            Vec2::new(hl, hw),
            Vec2::new(-hl, hw),
        ]
        .map(|p| p.rotate(self.heading) + self.center)
    }

    pub fn polygon(&self) -> Polygon {
        Polygon::new(self.corners().to_vec())
    }

    /// Coordinates of `p` in the rectangle's own frame.
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.center).rotate(-self.heading)
    }

    /// Strict interior test with [`CONTACT_EPS`] margin.
    pub fn contains_strict(&self, p: Vec2) -> bool {
        let q = self.to_local(p);
        q.x.abs() < 0.5 * self.length - CONTACT_EPS && q.y.abs() < 0.5 * self.width - CONTACT_EPS
    }

    /// Does the segment `ab` pass through the open interior of the rectangle?
    pub fn segment_enters(&self, a: Vec2, b: Vec2) -> bool {
        let p = self.to_local(a);
        let q = self.to_local(b);
        let d = q - p;
        let (hl, hw) = (
            0.5 * self.length - CONTACT_EPS,
            0.5 * self.width - CONTACT_EPS,
        );
        if hl <= 0.0 || hw <= 0.0 {
            return false;
        }
        // Liang–Barsky clip against the shrunken box.
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        for (pk, qk) in [
            (-d.x, p.x + hl),
            (d.x, hl - p.x),
            (-d.y, p.y + hw),
            (d.y, hw - p.y),
        ] {
            if pk == 0.0 {
                if qk <= 0.0 {
                    return false;
                }
            } else {
                let r = qk / pk;
                if pk < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
            }
        }
        t1 - t0 > 1e-12
    }
}

/// Separating-axis overlap of two rectangles; contact within
/// [`CONTACT_EPS`] is not overlap.
pub fn rects_overlap(a: &OrientedRect, b: &OrientedRect) -> bool {
    let ca = a.corners();
    let cb = b.corners();
    let axes = [
        Vec2::new(1.0, 0.0).rotate(a.heading),
        Vec2::new(0.0, 1.0).rotate(a.heading),
        Vec2::new(1.0, 0.0).rotate(b.heading),
        Vec2::new(0.0, 1.0).rotate(b.heading),
    ];
    for axis in axes {
        let (amin, amax) = project(&ca, axis);
        let (bmin, bmax) = project(&cb, axis);
        let overlap = amax.min(bmax) - amin.max(bmin);
        if overlap <= CONTACT_EPS {
            return false;
        }
    }
    true
}

fn project(pts: &[Vec2; 4], axis: Vec2) -> (f64, f64) {
    pts.iter()
        .map(|p| p.dot(axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}

/// Closed containment of a rectangle inside a simple polygon: no boundary
/// edge enters the rectangle's interior and the rectangle's center is
/// inside. Shared edges count as contained.
pub fn rect_inside_polygon(rect: &OrientedRect, poly: &Polygon) -> bool {
    if poly.edges().any(|(a, b)| rect.segment_enters(a, b)) {
        return false;
    }
    poly.contains(rect.center)
}
