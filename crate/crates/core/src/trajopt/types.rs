use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{angle_diff, closest_point_on_segment, normalize_angle, Polygon, Pose, Vec2};
use crate::homotopy::HomotopySignature;

/// Where the trajectory endpoint must end up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GoalConstraint {
    /// Reach a position with a heading.
    PointPose { pose: Pose, eps: f64 },
    /// Reach a position, heading free.
    Point { position: Vec2, eps: f64 },
    /// Slide anywhere along a segment.
    LineSet { start: Vec2, end: Vec2 },
    /// Slide along an arc of the circle around `center`, facing the center.
    /// The arc runs counterclockwise from `start_angle` over `span` radians.
    ArcSet {
        center: Vec2,
        radius: f64,
        start_angle: f64,
        span: f64,
        eps: f64,
    },
}

impl GoalConstraint {
    pub fn validate(&self) -> Result<(), TrajOptError> {
        let ok = match self {
            GoalConstraint::PointPose { eps, .. } | GoalConstraint::Point { eps, .. } => *eps > 0.0,
            GoalConstraint::LineSet { start, end } => start.distance(*end) > 1e-9,
            GoalConstraint::ArcSet { radius, span, eps, .. } => *radius > 0.0 && *span > 0.0 && *eps > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(TrajOptError::InvalidGoal(format!("{self:?}")))
        }
    }

    pub fn is_full_circle(&self) -> bool {
        matches!(self, GoalConstraint::ArcSet { span, .. } if *span >= TAU - 1e-9)
    }

    /// Nearest point of the goal set to `p`.
    pub fn nearest_point(&self, p: Vec2) -> Vec2 {
        match *self {
            GoalConstraint::PointPose { pose, .. } => pose.position(),
            GoalConstraint::Point { position, .. } => position,
            GoalConstraint::LineSet { start, end } => closest_point_on_segment(p, start, end).0,
            GoalConstraint::ArcSet {
                center,
                radius,
                start_angle,
                span,
                ..
            } => {
                let d = p - center;
                let phi = if d.norm() < 1e-12 { start_angle } else { d.angle() };
                if arc_contains(start_angle, span, phi) {
                    center + Vec2::from_angle(phi) * radius
                } else {
                    let a = center + Vec2::from_angle(start_angle) * radius;
                    let b = center + Vec2::from_angle(start_angle + span) * radius;
                    if a.distance(p) <= b.distance(p) {
                        a
                    } else {
                        b
                    }
                }
            }
        }
    }

    /// Required final heading for an endpoint at `end`, if the goal fixes one.
    pub fn final_heading(&self, end: Vec2) -> Option<f64> {
        match *self {
            GoalConstraint::PointPose { pose, .. } => Some(pose.theta),
            GoalConstraint::ArcSet { center, .. } => Some((center - end).angle()),
            _ => None,
        }
    }

    /// Goal error of a final pose, used by the hard acceptance check.
    pub fn error(&self, pose: &Pose) -> f64 {
        let p = pose.position();
        let position_err = p.distance(self.nearest_point(p));
        match self.final_heading(p) {
            Some(h) => position_err.max(angle_diff(pose.theta, h).abs()),
            None => position_err,
        }
    }

    /// Points along the goal set, for drawing.
    pub fn sample(&self, n: usize) -> Vec<Vec2> {
        let n = n.max(2);
        match *self {
            GoalConstraint::PointPose { pose, .. } => vec![pose.position()],
            GoalConstraint::Point { position, .. } => vec![position],
            GoalConstraint::LineSet { start, end } => (0..n).map(|k| start.lerp(end, k as f64 / (n - 1) as f64)).collect(),
            GoalConstraint::ArcSet {
                center,
                radius,
                start_angle,
                span,
                ..
            } => (0..n)
                .map(|k| center + Vec2::from_angle(start_angle + span * k as f64 / (n - 1) as f64) * radius)
                .collect(),
        }
    }

    /// Length of the set (0 for single poses).
    pub fn extent(&self) -> f64 {
        match *self {
            GoalConstraint::LineSet { start, end } => start.distance(end),
            GoalConstraint::ArcSet { radius, span, .. } => radius * span,
            _ => 0.0,
        }
    }
}

/// Whether angle `phi` lies on the counterclockwise interval `[start, start + span]`.
pub fn arc_contains(start: f64, span: f64, phi: f64) -> bool {
    if span >= TAU - 1e-12 {
        return true;
    }
    let rel = (phi - start).rem_euclid(TAU);
    rel <= span + 1e-12 || rel >= TAU - 1e-12
}

/// A disc moving at constant velocity; `radius` already includes the follower footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicObstacle {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

impl DynamicObstacle {
    pub fn at(&self, t: f64) -> Vec2 {
        self.position + self.velocity * t
    }
}

/// Everything the optimizer must respect for one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    /// Obstacle hulls, already inflated by the follower footprint.
    pub static_groups: Vec<Polygon>,
    pub margin: f64,
    pub dynamic_obstacles: Vec<DynamicObstacle>,
    pub v_cap: f64,
    pub a_max: f64,
    pub omega_max: f64,
    /// Speed of the robot when the trajectory starts.
    pub initial_speed: f64,
    pub allow_reverse: bool,
    pub goal: GoalConstraint,
}

impl ConstraintSet {
    pub fn new(goal: GoalConstraint, v_cap: f64) -> Self {
        Self {
            static_groups: Vec::new(),
            margin: 0.1,
            dynamic_obstacles: Vec::new(),
            v_cap,
            a_max: 1.5,
            omega_max: 2.0,
            initial_speed: 0.0,
            allow_reverse: false,
            goal,
        }
    }

    pub fn validate(&self) -> Result<(), TrajOptError> {
        if !(self.margin > 0.0 && self.v_cap > 0.0 && self.a_max > 0.0 && self.omega_max > 0.0) {
            return Err(TrajOptError::InvalidGoal("limits must be positive".into()));
        }
        self.goal.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub obstacle: f64,
    pub kinematic: f64,
    pub accel: f64,
    pub goal: f64,
    pub velocity: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            obstacle: 50.0,
            kinematic: 100.0,
            accel: 10.0,
            goal: 20.0,
            velocity: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub weights: Weights,
    pub iterations: usize,
    /// Stop when an accepted step lowers J by less than this.
    pub tol: f64,
    /// Goal tolerance ε.
    pub eps: f64,
    /// Clearance penalties engage this far beyond the margin.
    pub clearance_pad: f64,
    /// Speed penalties engage this fraction below the cap.
    pub speed_pad: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            weights: Weights::default(),
            iterations: 40,
            tol: 1e-4,
            eps: 0.2,
            clearance_pad: 0.05,
            speed_pad: 0.03,
        }
    }
}

/// Timed pose sequence; `poses[0]` is the robot pose at planning time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub poses: Vec<Pose>,
    pub dt: f64,
    pub signature: HomotopySignature,
    pub cost: f64,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>, dt: f64) -> Self {
        Self {
            poses,
            dt,
            signature: HomotopySignature::default(),
            cost: 0.0,
        }
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.poses.iter().map(Pose::position).collect()
    }

    pub fn length(&self) -> f64 {
        self.poses.windows(2).map(|w| w[0].position().distance(w[1].position())).sum()
    }

    pub fn end(&self) -> Pose {
        *self.poses.last().expect("trajectory has poses")
    }

    pub fn duration(&self) -> f64 {
        self.dt * (self.poses.len().saturating_sub(1)) as f64
    }

    /// Resamples a polyline at equal arclength into a trajectory starting at `start`.
    ///
    /// The pose count is chosen so each segment is at most 90% of `v_cap·dt`; past
    /// `max_segments` the segment time is stretched instead.
    pub fn from_polyline(
        start: Pose,
        polyline: &[Vec2],
        v_cap: f64,
        dt: f64,
        max_segments: usize,
        final_heading: Option<f64>,
    ) -> Self {
        let mut pts: Vec<Vec2> = Vec::with_capacity(polyline.len() + 1);
        pts.push(start.position());
        for &p in polyline {
            if pts.last().is_none_or(|q| q.distance(p) > 1e-9) {
                pts.push(p);
            }
        }
        let total: f64 = pts.windows(2).map(|w| w[0].distance(w[1])).sum();
        let step = 0.9 * v_cap * dt;
        let mut m = ((total / step).ceil() as usize).max(2);
        let mut seg_dt = dt;
        if m > max_segments {
            m = max_segments.max(2);
            seg_dt = total / (0.9 * v_cap * m as f64);
        }
        let mut positions = Vec::with_capacity(m + 1);
        let mut seg = 0;
        let mut seg_start = 0.0;
        for k in 0..=m {
            let s = total * k as f64 / m as f64;
            while seg + 2 < pts.len() && seg_start + pts[seg].distance(pts[seg + 1]) < s {
                seg_start += pts[seg].distance(pts[seg + 1]);
                seg += 1;
            }
            if pts.len() < 2 {
                positions.push(pts[0]);
                continue;
            }
            let len = pts[seg].distance(pts[seg + 1]);
            let t = if len > 0.0 { ((s - seg_start) / len).clamp(0.0, 1.0) } else { 0.0 };
            positions.push(pts[seg].lerp(pts[seg + 1], t));
        }
        let mut poses = Vec::with_capacity(m + 1);
        poses.push(start);
        for i in 1..=m {
            let theta = if i < m {
                (positions[i + 1] - positions[i]).angle()
            } else {
                final_heading.unwrap_or_else(|| {
                    let d = positions[m] - positions[m - 1];
                    if d.norm() > 1e-9 {
                        d.angle()
                    } else {
                        poses[m - 1].theta
                    }
                })
            };
            poses.push(Pose::from_parts(positions[i], normalize_angle(theta)));
        }
        Self::new(poses, seg_dt)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajOptError {
    #[error("optimized trajectory violates a hard check: {reason}")]
    Infeasible { reason: String, trajectory: Box<Trajectory> },
    #[error("invalid constraint: {0}")]
    InvalidGoal(String),
    #[error("trajectory needs at least 3 poses")]
    TooShort,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn arc_membership_wraps() {
        assert!(arc_contains(3.0, 1.0, -3.0));
        assert!(!arc_contains(3.0, 0.1, 0.0));
        assert!(arc_contains(0.0, TAU, 5.0));
    }

    #[test]
    fn nearest_points() {
        let line = GoalConstraint::LineSet {
            start: Vec2::new(2.0, -1.0),
            end: Vec2::new(2.0, 1.0),
        };
        assert_eq!(line.nearest_point(Vec2::new(0.0, 0.5)), Vec2::new(2.0, 0.5));
        let arc = GoalConstraint::ArcSet {
            center: Vec2::ZERO,
            radius: 2.0,
            start_angle: 0.0,
            span: FRAC_PI_2,
            eps: 0.2,
        };
        let p = arc.nearest_point(Vec2::new(1.0, 1.0));
        assert_relative_eq!(p.norm(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(arc.nearest_point(Vec2::new(1.0, -3.0)).x, 2.0);
        assert_relative_eq!(arc.final_heading(Vec2::new(2.0, 0.0)).unwrap(), PI);
    }

    #[test]
    fn polyline_resampling_respects_spacing() {
        let t = Trajectory::from_polyline(
            Pose::default(),
            &[Vec2::new(2.0, 0.0), Vec2::new(2.0, 2.0)],
            1.0,
            0.3,
            40,
            None,
        );
        let m = t.poses.len() - 1;
        assert_eq!(m, (4.0f64 / 0.27).ceil() as usize);
        for w in t.poses.windows(2) {
            assert!(w[0].position().distance(w[1].position()) <= 0.27 + 1e-9);
        }
        assert_relative_eq!(t.end().position().y, 2.0, epsilon = 1e-12);
        assert_relative_eq!(t.end().theta, FRAC_PI_2, epsilon = 1e-12);
        let capped = Trajectory::from_polyline(Pose::default(), &[Vec2::new(10.0, 0.0)], 1.0, 0.3, 20, Some(1.0));
        assert_eq!(capped.poses.len(), 21);
        assert!(capped.dt > 0.3);
        assert_relative_eq!(capped.end().theta, 1.0);
    }
}
