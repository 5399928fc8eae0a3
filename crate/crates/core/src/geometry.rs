//! Planar geometry shared by the simulator, the costmap and the planner.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// A 2D point or vector in meters. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Unit vector, or zero when the input is (numerically) zero.
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n < 1e-12 {
            Vec2::ZERO
        } else {
            self * (1.0 / n)
        }
    }

    /// Counterclockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn lerp(self, other: Vec2, t: f64) -> Vec2 {
        self + (other - self) * t
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

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (-π, π].
pub fn normalize_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let mut a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Signed smallest difference `a - b`, in (-π, π].
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b)
}

/// Planar pose. `theta` is kept in (-π, π] by every constructor.
/// Serialized as `[x, y, theta]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn from_parts(position: Vec2, theta: f64) -> Self {
        Self::new(position.x, position.y, theta)
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::from_angle(self.theta)
    }

    /// Maps a point expressed in this pose's frame into the world frame.
    pub fn transform_point(&self, local: Vec2) -> Vec2 {
        self.position() + local.rotate(self.theta)
    }

    /// Maps a world point into this pose's frame.
    pub fn inverse_transform_point(&self, world: Vec2) -> Vec2 {
        (world - self.position()).rotate(-self.theta)
    }
}

impl From<[f64; 3]> for Pose {
    fn from(a: [f64; 3]) -> Self {
        Pose::new(a[0], a[1], a[2])
    }
}

impl From<Pose> for [f64; 3] {
    fn from(p: Pose) -> Self {
        [p.x, p.y, p.theta]
    }
}

/// Closest point to `p` on segment `[a, b]` and the segment parameter.
pub fn closest_point_on_segment(p: Vec2, a: Vec2, b: Vec2) -> (Vec2, f64) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 < 1e-18 {
        return (a, 0.0);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    (a + ab * t, t)
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    closest_point_on_segment(p, a, b).0.distance(p)
}

/// Proper or touching intersection of two closed segments.
pub fn segments_intersect(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    segment_intersection_param(a, b, c, d).is_some() || collinear_overlap(a, b, c, d)
}

/// Intersection parameters `(t, u)` with `a + t(b-a) = c + u(d-c)` for non-parallel segments.
pub fn segment_intersection_param(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> Option<(f64, f64)> {
    let r = b - a;
    let s = d - c;
    let denom = r.cross(s);
    if denom.abs() < 1e-14 {
        return None;
    }
    let qp = c - a;
    let t = qp.cross(s) / denom;
    let u = qp.cross(r) / denom;
    const E: f64 = 1e-12;
    if (-E..=1.0 + E).contains(&t) && (-E..=1.0 + E).contains(&u) {
        Some((t, u))
    } else {
        None
    }
}

fn collinear_overlap(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let r = b - a;
    if r.cross(c - a).abs() > 1e-12 || r.cross(d - a).abs() > 1e-12 {
        return false;
    }
    let len2 = r.norm_squared();
    if len2 < 1e-18 {
        return point_segment_distance(a, c, d) < 1e-12;
    }
    let t0 = (c - a).dot(r) / len2;
    let t1 = (d - a).dot(r) / len2;
    t0.max(t1) >= 0.0 && t0.min(t1) <= 1.0
}

pub fn segment_segment_distance(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

/// Closest pair of points between two segments.
pub fn segment_segment_closest(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> (Vec2, Vec2) {
    if let Some((t, _)) = segment_intersection_param(a, b, c, d) {
        let p = a.lerp(b, t);
        return (p, p);
    }
    let candidates = [
        (a, closest_point_on_segment(a, c, d).0),
        (b, closest_point_on_segment(b, c, d).0),
        (closest_point_on_segment(c, a, b).0, c),
        (closest_point_on_segment(d, a, b).0, d),
    ];
    let mut best = candidates[0];
    for cand in &candidates[1..] {
        if cand.0.distance(cand.1) < best.0.distance(best.1) {
            best = *cand;
        }
    }
    best
}

/// Ray/circle intersection: smallest `t >= 0` with `|origin + t·dir - center| = radius`.
/// `dir` must be a unit vector.
pub fn ray_circle(origin: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = -b - sq;
    let t1 = -b + sq;
    if t0 >= 0.0 {
        Some(t0)
    } else if t1 >= 0.0 {
        // origin inside the circle
        Some(0.0)
    } else {
        None
    }
}

/// Ray/segment intersection distance. `dir` must be a unit vector.
pub fn ray_segment(origin: Vec2, dir: Vec2, a: Vec2, b: Vec2) -> Option<f64> {
    let s = b - a;
    let denom = dir.cross(s);
    if denom.abs() < 1e-14 {
        return None;
    }
    let qp = a - origin;
    let t = qp.cross(s) / denom;
    let u = qp.cross(dir) / denom;
    if t >= 0.0 && (0.0..=1.0).contains(&u) {
        Some(t)
    } else {
        None
    }
}

/// A simple polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<Vec2>,
}

impl Polygon {
    /// Builds a polygon, reversing the vertex order if it is clockwise.
    pub fn new(mut vertices: Vec<Vec2>) -> Self {
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        Self { vertices }
    }

    /// Axis-aligned rectangle.
    pub fn rect(min: Vec2, max: Vec2) -> Self {
        Self::new(vec![
            min,
            Vec2::new(max.x, min.y),
            max,
            Vec2::new(min.x, max.y),
        ])
    }

    /// Regular polygon approximating a disc (circumscribed, so it covers the disc).
    pub fn regular(center: Vec2, radius: f64, sides: usize) -> Self {
        let r = radius / (PI / sides as f64).cos();
        let vertices = (0..sides)
            .map(|k| center + Vec2::from_angle(2.0 * PI * k as f64 / sides as f64) * r)
            .collect();
        Self { vertices }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len();
        if n == 0 {
            return Vec2::ZERO;
        }
        let a = self.area();
        if a.abs() < 1e-12 {
            let sum = self.vertices.iter().fold(Vec2::ZERO, |acc, &v| acc + v);
            return sum * (1.0 / n as f64);
        }
        let mut c = Vec2::ZERO;
        for (p, q) in self.edges() {
            let w = p.cross(q);
            c += (p + q) * w;
        }
        c * (1.0 / (6.0 * a))
    }

    /// Even-odd containment test (boundary counts as inside).
    pub fn contains(&self, p: Vec2) -> bool {
        if self.boundary_distance(p) < 1e-12 {
            return true;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn boundary_distance(&self, p: Vec2) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn closest_boundary_point(&self, p: Vec2) -> Vec2 {
        let mut best = self.vertices[0];
        let mut best_d = f64::INFINITY;
        for (a, b) in self.edges() {
            let (q, _) = closest_point_on_segment(p, a, b);
            let d = q.distance(p);
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        best
    }

    /// Signed distance: positive outside, negative inside.
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        let d = self.boundary_distance(p);
        if self.contains(p) {
            -d
        } else {
            d
        }
    }

    /// Distance from a segment to the polygon region (0 if they touch or overlap).
    pub fn segment_distance(&self, a: Vec2, b: Vec2) -> f64 {
        if self.contains(a) || self.contains(b) {
            return 0.0;
        }
        self.edges()
            .map(|(p, q)| segment_segment_distance(a, b, p, q))
            .fold(f64::INFINITY, f64::min)
    }

    /// True when the open segment passes through the polygon interior.
    ///
    /// Touching the boundary (grazing a vertex or sliding along an edge) does not count.
    pub fn segment_crosses_interior(&self, a: Vec2, b: Vec2) -> bool {
        // Sample the segment between its boundary crossings; any sample strictly inside is a hit.
        let mut ts = vec![0.0, 1.0];
        for (p, q) in self.edges() {
            if let Some((t, _)) = segment_intersection_param(a, b, p, q) {
                ts.push(t.clamp(0.0, 1.0));
            }
        }
        ts.sort_by(|x, y| x.total_cmp(y));
        for w in ts.windows(2) {
            if w[1] - w[0] < 1e-9 {
                continue;
            }
            let mid = a.lerp(b, 0.5 * (w[0] + w[1]));
            if self.contains(mid) && self.boundary_distance(mid) > 1e-9 {
                return true;
            }
        }
        false
    }

    /// Ray hit distance against the polygon boundary.
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        self.edges()
            .filter_map(|(a, b)| ray_segment(origin, dir, a, b))
            .min_by(|x, y| x.total_cmp(y))
    }

    /// Whether the polygon is simple (no two non-adjacent edges intersect).
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            for j in (i + 1)..n {
                if j == i || (j + 1) % n == i || (i + 1) % n == j {
                    continue;
                }
                let (c, d) = (self.vertices[j], self.vertices[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.distance(b)).sum()
    }
}

pub fn signed_area(vertices: &[Vec2]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        s += vertices[i].cross(vertices[(i + 1) % n]);
    }
    0.5 * s
}

/// Convex hull by Andrew's monotone chain; counterclockwise, no collinear points.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| (a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12);
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Vec2> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2
            && (lower[lower.len() - 1] - lower[lower.len() - 2]).cross(p - lower[lower.len() - 2])
                <= 1e-12
        {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Vec2> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2
            && (upper[upper.len() - 1] - upper[upper.len() - 2]).cross(p - upper[upper.len() - 2])
                <= 1e-12
        {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Closest points between two convex polygons (zero distance if they overlap).
pub fn polygon_closest_points(p: &Polygon, q: &Polygon) -> (Vec2, Vec2) {
    let mut best = (p.vertices[0], q.vertices[0]);
    let mut best_d = f64::INFINITY;
    for (a, b) in p.edges() {
        for (c, d) in q.edges() {
            let (x, y) = segment_segment_closest(a, b, c, d);
            let dist = x.distance(y);
            if dist < best_d {
                best_d = dist;
                best = (x, y);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn angles_wrap_into_half_open_interval() {
        assert_relative_eq!(normalize_angle(3.0 * PI), PI);
        assert_relative_eq!(normalize_angle(-PI), PI);
        assert_relative_eq!(normalize_angle(-3.0 * PI / 2.0), PI / 2.0);
        assert_relative_eq!(angle_diff(0.1, 2.0 * PI - 0.1), 0.2, epsilon = 1e-12);
        let p = Pose::new(0.0, 0.0, 7.0);
        assert!(p.theta > -PI && p.theta <= PI);
    }

    #[test]
    fn hull_of_square_with_interior_points() {
        let pts = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(0.5, 0.5),
            Vec2::new(0.5, 0.0),
        ];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!(signed_area(&h) > 0.0);
    }

    #[test]
    fn polygon_signed_distance_and_containment() {
        let sq = Polygon::rect(Vec2::new(-1.0, -1.0), Vec2::new(1.0, 1.0));
        assert!(sq.contains(Vec2::ZERO));
        assert_relative_eq!(sq.signed_distance(Vec2::ZERO), -1.0);
        assert_relative_eq!(sq.signed_distance(Vec2::new(3.0, 0.0)), 2.0);
        assert!(sq.segment_crosses_interior(Vec2::new(-2.0, 0.0), Vec2::new(2.0, 0.0)));
        // grazing along the top edge does not cross the interior
        assert!(!sq.segment_crosses_interior(Vec2::new(-2.0, 1.0), Vec2::new(2.0, 1.0)));
        assert!(!sq.segment_crosses_interior(Vec2::new(-2.0, 3.0), Vec2::new(2.0, 3.0)));
    }

    #[test]
    fn ray_casts() {
        let t = ray_circle(Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(5.0, 0.0), 1.0).unwrap();
        assert_relative_eq!(t, 4.0);
        assert!(ray_circle(Vec2::ZERO, Vec2::new(-1.0, 0.0), Vec2::new(5.0, 0.0), 1.0).is_none());
        let sq = Polygon::rect(Vec2::new(2.0, -1.0), Vec2::new(3.0, 1.0));
        assert_relative_eq!(sq.ray_hit(Vec2::ZERO, Vec2::new(1.0, 0.0)).unwrap(), 2.0);
    }

    #[test]
    fn closest_points_between_squares() {
        let a = Polygon::rect(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0));
        let b = Polygon::rect(Vec2::new(3.0, 0.0), Vec2::new(4.0, 1.0));
        let (p, q) = polygon_closest_points(&a, &b);
        assert_relative_eq!(p.distance(q), 2.0);
    }
}
