use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::types::{ConstraintSet, GoalConstraint, OptimizerConfig};
use crate::geometry::{angle_diff, Polygon, Pose, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Obstacle,
    Dynamic,
    Kinematic,
    Accel,
    Velocity,
    Goal,
}

pub const FAMILIES: [Family; 6] = [
    Family::Obstacle,
    Family::Dynamic,
    Family::Kinematic,
    Family::Accel,
    Family::Velocity,
    Family::Goal,
];

/// One weighted residual with its sparse gradient over the free variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub family: Family,
    pub weight: f64,
    pub value: f64,
    len: usize,
    idx: [usize; 6],
    grad: [f64; 6],
}

impl Row {
    fn new(family: Family, weight: f64, value: f64) -> Self {
        Self {
            family,
            weight,
            value,
            len: 0,
            idx: [0; 6],
            grad: [0.0; 6],
        }
    }

    /// Adds `d value / d (pose, component)`; pose 0 is fixed and skipped.
    fn with(mut self, pose: usize, component: usize, d: f64) -> Self {
        if pose == 0 || d == 0.0 {
            return self;
        }
        let var = 3 * (pose - 1) + component;
        if let Some(k) = self.idx[..self.len].iter().position(|&i| i == var) {
            self.grad[k] += d;
        } else {
            self.idx[self.len] = var;
            self.grad[self.len] = d;
            self.len += 1;
        }
        self
    }

    fn with_point(self, pose: usize, g: Vec2) -> Self {
        self.with(pose, 0, g.x).with(pose, 1, g.y)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx[..self.len].iter().copied().zip(self.grad[..self.len].iter().copied())
    }

    /// Zeroes an inactive hinge while keeping its slot.
    fn inactive(family: Family, weight: f64) -> Self {
        Self::new(family, weight, 0.0)
    }
}

/// Precomputed bounding circle per hull for cheap rejection.
pub(crate) struct HullCache<'a> {
    hulls: &'a [Polygon],
    centers: Vec<Vec2>,
    radii: Vec<f64>,
}

impl<'a> HullCache<'a> {
    pub(crate) fn new(hulls: &'a [Polygon]) -> Self {
        let centers: Vec<Vec2> = hulls.iter().map(Polygon::centroid).collect();
        let radii = hulls
            .iter()
            .zip(&centers)
            .map(|(h, c)| h.vertices.iter().map(|v| v.distance(*c)).fold(0.0, f64::max))
            .collect();
        Self { hulls, centers, radii }
    }
}

/// Signed distance to a convex counterclockwise polygon and its gradient.
pub fn convex_signed_distance(poly: &Polygon, p: Vec2) -> (f64, Vec2) {
    let v = &poly.vertices;
    let n = v.len();
    let mut max_s = f64::NEG_INFINITY;
    let mut max_normal = Vec2::ZERO;
    let mut best_d2 = f64::INFINITY;
    let mut best_q = v[0];
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        let e = b - a;
        let len = e.norm();
        if len < 1e-12 {
            continue;
        }
        let normal = Vec2::new(e.y, -e.x) * (1.0 / len);
        let s = normal.dot(p - a);
        if s > max_s {
            max_s = s;
            max_normal = normal;
        }
        let t = ((p - a).dot(e) / (len * len)).clamp(0.0, 1.0);
        let q = a + e * t;
        let d2 = (p - q).norm_squared();
        if d2 < best_d2 {
            best_d2 = d2;
            best_q = q;
        }
    }
    if max_s <= 0.0 {
        (max_s, max_normal)
    } else {
        let d = best_d2.sqrt();
        if d < 1e-12 {
            (0.0, max_normal)
        } else {
            (d, (p - best_q) * (1.0 / d))
        }
    }
}

/// Residual rows at `poses`. With `all_rows`, inactive hinges are emitted as zero rows so the
/// row layout does not depend on the configuration.
pub fn residual_rows(poses: &[Pose], cs: &ConstraintSet, cfg: &OptimizerConfig, dt: f64, all_rows: bool) -> Vec<Row> {
    let hulls = HullCache::new(&cs.static_groups);
    let mut rows = Vec::with_capacity(poses.len() * 6);
    collect_rows(poses, cs, cfg, dt, all_rows, &hulls, &mut rows);
    rows
}

pub(crate) fn collect_rows(
    poses: &[Pose],
    cs: &ConstraintSet,
    cfg: &OptimizerConfig,
    dt: f64,
    all_rows: bool,
    hulls: &HullCache,
    rows: &mut Vec<Row>,
) {
    let w = &cfg.weights;
    let m = poses.len() - 1;
    let mut push = |row: Row, active: bool| {
        if active {
            rows.push(row);
        } else if all_rows {
            rows.push(Row::inactive(row.family, row.weight));
        }
    };

    // static clearance
    let target = cs.margin + cfg.clearance_pad;
    for i in 1..=m {
        let p = poses[i].position();
        for (h, hull) in hulls.hulls.iter().enumerate() {
            if !all_rows && p.distance(hulls.centers[h]) - hulls.radii[h] > target {
                continue;
            }
            let (d, g) = convex_signed_distance(hull, p);
            let r = target - d;
            push(Row::new(Family::Obstacle, w.obstacle, r).with_point(i, g * -1.0), r > 0.0);
        }
    }

    // dynamic clearance under constant-velocity prediction
    for i in 1..=m {
        let p = poses[i].position();
        for o in &cs.dynamic_obstacles {
            let c = o.at(i as f64 * dt);
            let diff = p - c;
            let dist = diff.norm().max(1e-9);
            let r = target + o.radius - dist;
            push(Row::new(Family::Dynamic, w.obstacle, r).with_point(i, diff * (-1.0 / dist)), r > 0.0);
        }
    }

    // nonholonomic bisection and forward drive
    for i in 0..m {
        let (a, b) = (poses[i], poses[i + 1]);
        let d = b.position() - a.position();
        let (sa, ca) = a.theta.sin_cos();
        let (sb, cb) = b.theta.sin_cos();
        let r = (ca + cb) * d.y - (sa + sb) * d.x;
        let g = Vec2::new(-(sa + sb), ca + cb);
        let row = Row::new(Family::Kinematic, w.kinematic, r)
            .with_point(i + 1, g)
            .with_point(i, g * -1.0)
            .with(i, 2, -sa * d.y - ca * d.x)
            .with(i + 1, 2, -sb * d.y - cb * d.x);
        push(row, true);
        if !cs.allow_reverse {
            let f = ca * d.x + sa * d.y;
            let h = Vec2::new(ca, sa);
            let row = Row::new(Family::Kinematic, w.kinematic, -f)
                .with_point(i + 1, h * -1.0)
                .with_point(i, h)
                .with(i, 2, sa * d.x - ca * d.y);
            push(row, f < 0.0);
        }
    }

    // translational and angular speed limits
    let v_limit = (1.0 - cfg.speed_pad) * cs.v_cap;
    let w_limit = 0.95 * cs.omega_max;
    let mut speeds = Vec::with_capacity(m);
    for i in 0..m {
        let d = poses[i + 1].position() - poses[i].position();
        let len = d.norm();
        let u = if len > 1e-12 { d * (1.0 / len) } else { Vec2::ZERO };
        speeds.push((len / dt, u));
        let r = len / dt - v_limit;
        let row = Row::new(Family::Velocity, w.velocity, r)
            .with_point(i + 1, u * (1.0 / dt))
            .with_point(i, u * (-1.0 / dt));
        push(row, r > 0.0);
        let omega = angle_diff(poses[i + 1].theta, poses[i].theta) / dt;
        let r = omega.abs() - w_limit;
        let s = omega.signum() / dt;
        push(
            Row::new(Family::Velocity, w.velocity, r).with(i + 1, 2, s).with(i, 2, -s),
            r > 0.0,
        );
    }

    // acceleration, starting from the robot's current speed
    let dv_limit = cs.a_max * dt;
    for i in 0..m {
        let (v, u) = speeds[i];
        let (prev, pu) = if i == 0 {
            (cs.initial_speed.abs(), Vec2::ZERO)
        } else {
            speeds[i - 1]
        };
        let dv = v - prev;
        let r = dv.abs() - dv_limit;
        let s = dv.signum() / dt;
        let mut row = Row::new(Family::Accel, w.accel, r)
            .with_point(i + 1, u * s)
            .with_point(i, u * -s);
        if i > 0 {
            row = row.with_point(i, pu * -s).with_point(i - 1, pu * s);
        }
        push(row, r > 0.0);
    }

    // goal set
    let end = poses[m];
    let p = end.position();
    match cs.goal {
        GoalConstraint::PointPose { pose, .. } => {
            push(Row::new(Family::Goal, w.goal, p.x - pose.x).with(m, 0, 1.0), true);
            push(Row::new(Family::Goal, w.goal, p.y - pose.y).with(m, 1, 1.0), true);
            push(
                Row::new(Family::Goal, w.goal, angle_diff(end.theta, pose.theta)).with(m, 2, 1.0),
                true,
            );
        }
        GoalConstraint::Point { position, .. } => {
            push(Row::new(Family::Goal, w.goal, p.x - position.x).with(m, 0, 1.0), true);
            push(Row::new(Family::Goal, w.goal, p.y - position.y).with(m, 1, 1.0), true);
        }
        GoalConstraint::LineSet { start, end: stop } => {
            let d = stop - start;
            let len = d.norm();
            let rel = p - start;
            let across = d.cross(rel) / len;
            push(
                Row::new(Family::Goal, w.goal, across).with_point(m, Vec2::new(-d.y, d.x) * (1.0 / len)),
                true,
            );
            let along = d.dot(rel) / len;
            push(Row::new(Family::Goal, w.goal, -along).with_point(m, d * (-1.0 / len)), along < 0.0);
            push(
                Row::new(Family::Goal, w.goal, along - len).with_point(m, d * (1.0 / len)),
                along > len,
            );
        }
        GoalConstraint::ArcSet {
            center,
            radius,
            start_angle,
            span,
            ..
        } => {
            let u = p - center;
            let rho = u.norm().max(1e-9);
            push(
                Row::new(Family::Goal, w.goal, rho - radius).with_point(m, u * (1.0 / rho)),
                true,
            );
            if !cs.goal.is_full_circle() {
                let s = Vec2::from_angle(start_angle);
                let e = Vec2::from_angle(start_angle + span);
                let cs_ = s.cross(u);
                let ce = u.cross(e);
                let gs = Vec2::new(-s.y, s.x);
                let ge = Vec2::new(e.y, -e.x);
                if span <= PI {
                    push(Row::new(Family::Goal, w.goal, -cs_).with_point(m, gs * -1.0), cs_ < 0.0);
                    push(Row::new(Family::Goal, w.goal, -ce).with_point(m, ge * -1.0), ce < 0.0);
                } else {
                    // reflex arc: outside only when both half-plane tests fail
                    let (r, g) = if -cs_ <= -ce { (-cs_, gs * -1.0) } else { (-ce, ge * -1.0) };
                    push(Row::new(Family::Goal, w.goal, r).with_point(m, g), r > 0.0);
                }
            }
            let to_c = center - p;
            let n2 = to_c.norm_squared().max(1e-12);
            let facing = angle_diff(end.theta, to_c.angle());
            push(
                Row::new(Family::Goal, w.goal, facing)
                    .with(m, 2, 1.0)
                    .with_point(m, Vec2::new(-to_c.y, to_c.x) * (1.0 / n2)),
                true,
            );
        }
    }
}
