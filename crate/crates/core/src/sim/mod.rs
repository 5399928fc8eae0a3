//! Deterministic 2D world: obstacles, scripted leaders and a unicycle follower.

mod sensor;

pub use sensor::{
    leader_outline, LeaderObservation, ObjectRef, ObservationHistory, Sensor, SensorFrame,
    SensorModel, TrackedObstacle, OUTLINE_SAMPLES,
};

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{angle_diff, Polygon, Pose, Vec2};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("no visible leader observation inside the {window} s window")]
    NoVisibleLeader { window: f64 },
    #[error("invalid world configuration: {0}")]
    InvalidConfig(String),
}

/// Geometry of an obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Polygon { vertices: Vec<Vec2> },
    Disc { center: Vec2, radius: f64 },
}

impl Shape {
    pub fn polygon(vertices: Vec<Vec2>) -> Self {
        Shape::Polygon {
            vertices: Polygon::new(vertices).vertices,
        }
    }

    pub fn disc(center: Vec2, radius: f64) -> Self {
        Shape::Disc { center, radius }
    }

    pub fn centroid(&self) -> Vec2 {
        match self {
            Shape::Polygon { vertices } => Polygon {
                vertices: vertices.clone(),
            }
            .centroid(),
            Shape::Disc { center, .. } => *center,
        }
    }

    /// Signed distance from `p` to the shape (negative inside).
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        match self {
            Shape::Polygon { vertices } => Polygon {
                vertices: vertices.clone(),
            }
            .signed_distance(p),
            Shape::Disc { center, radius } => p.distance(*center) - radius,
        }
    }

    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        match self {
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                (0..n)
                    .filter_map(|i| {
                        crate::geometry::ray_segment(origin, dir, vertices[i], vertices[(i + 1) % n])
                    })
                    .min_by(|a, b| a.total_cmp(b))
            }
            Shape::Disc { center, radius } => {
                crate::geometry::ray_circle(origin, dir, *center, *radius)
            }
        }
    }

    pub fn translate(&mut self, d: Vec2) {
        match self {
            Shape::Polygon { vertices } => vertices.iter_mut().for_each(|v| *v += d),
            Shape::Disc { center, .. } => *center += d,
        }
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        match self {
            Shape::Polygon { vertices } => {
                let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
                let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
                for v in vertices {
                    lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
                    hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
                }
                (lo, hi)
            }
            Shape::Disc { center, radius } => (
                *center - Vec2::new(*radius, *radius),
                *center + Vec2::new(*radius, *radius),
            ),
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        match self {
            Shape::Polygon { vertices } => {
                let poly = Polygon {
                    vertices: vertices.clone(),
                };
                if !poly.is_simple() {
                    return Err(SimError::InvalidConfig("polygon is not simple".into()));
                }
                if poly.area() <= 0.0 {
                    return Err(SimError::InvalidConfig(
                        "polygon must be counterclockwise".into(),
                    ));
                }
                Ok(())
            }
            Shape::Disc { radius, .. } => {
                if *radius > 0.0 {
                    Ok(())
                } else {
                    Err(SimError::InvalidConfig("disc radius must be positive".into()))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleKind {
    Static,
    Dynamic,
    /// Short obstacle: blocks the follower, not a flying leader.
    Overflyable,
}

/// Obstacle as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleConfig {
    pub shape: Shape,
    pub kind: ObstacleKind,
    /// Initial velocity (dynamic only).
    #[serde(default)]
    pub velocity: Vec2,
    /// Seconds between velocity resamples (dynamic only).
    #[serde(default = "default_resample_period")]
    pub resample_period: f64,
    /// Speed band `[min, max]` for resampled velocities.
    #[serde(default = "default_speed_band")]
    pub speed_band: [f64; 2],
}

fn default_resample_period() -> f64 {
    3.0
}

fn default_speed_band() -> [f64; 2] {
    [0.2, 0.6]
}

impl ObstacleConfig {
    pub fn fixed(shape: Shape) -> Self {
        Self {
            shape,
            kind: ObstacleKind::Static,
            velocity: Vec2::ZERO,
            resample_period: default_resample_period(),
            speed_band: default_speed_band(),
        }
    }

    pub fn overflyable(shape: Shape) -> Self {
        Self {
            kind: ObstacleKind::Overflyable,
            ..Self::fixed(shape)
        }
    }

    pub fn dynamic(shape: Shape, velocity: Vec2, resample_period: f64, speed_band: [f64; 2]) -> Self {
        Self {
            shape,
            kind: ObstacleKind::Dynamic,
            velocity,
            resample_period,
            speed_band,
        }
    }
}

/// Runtime obstacle with its own velocity generator.
#[derive(Debug, Clone)]
pub struct Obstacle {
    pub id: usize,
    pub shape: Shape,
    pub kind: ObstacleKind,
    pub velocity: Vec2,
    pub resample_period: f64,
    speed_band: [f64; 2],
    next_resample: f64,
    rng: ChaCha8Rng,
}

impl Obstacle {
    /// Whether this obstacle stops a sight line toward (or the body of) a leader.
    pub fn blocks_leader(&self, leader_flies: bool) -> bool {
        !(leader_flies && self.kind == ObstacleKind::Overflyable)
    }

    fn resample_velocity(&mut self) {
        let heading = self.rng.gen_range(-PI..PI);
        let [lo, hi] = self.speed_band;
        let speed = if hi > lo { self.rng.gen_range(lo..hi) } else { lo };
        self.velocity = Vec2::from_angle(heading) * speed;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub time: f64,
    pub pose: Pose,
}

/// Replayable leader motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderScript {
    pub waypoints: Vec<Waypoint>,
    pub identity: String,
    pub appearance_seed: u64,
    #[serde(default)]
    pub flies_over: bool,
    #[serde(default = "default_leader_radius")]
    pub radius: f64,
}

fn default_leader_radius() -> f64 {
    0.3
}

impl LeaderScript {
    pub fn new(identity: impl Into<String>, appearance_seed: u64, waypoints: Vec<Waypoint>) -> Self {
        Self {
            waypoints,
            identity: identity.into(),
            appearance_seed,
            flies_over: false,
            radius: default_leader_radius(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.waypoints.is_empty() {
            return Err(SimError::InvalidConfig(format!(
                "leader `{}` has no waypoints",
                self.identity
            )));
        }
        if self.waypoints.windows(2).any(|w| w[1].time <= w[0].time) {
            return Err(SimError::InvalidConfig(format!(
                "leader `{}` waypoint times must be strictly increasing",
                self.identity
            )));
        }
        if self.radius <= 0.0 {
            return Err(SimError::InvalidConfig("leader radius must be positive".into()));
        }
        Ok(())
    }

    pub fn end_time(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.time)
    }

    /// Linear interpolation between the bracketing waypoints; clamped outside the script.
    pub fn pose_at(&self, t: f64) -> Pose {
        let wps = &self.waypoints;
        if t <= wps[0].time {
            return wps[0].pose;
        }
        let last = wps[wps.len() - 1];
        if t >= last.time {
            return last.pose;
        }
        let k = wps.partition_point(|w| w.time <= t);
        let (a, b) = (wps[k - 1], wps[k]);
        let s = (t - a.time) / (b.time - a.time);
        let pos = a.pose.position().lerp(b.pose.position(), s);
        let theta = a.pose.theta + s * angle_diff(b.pose.theta, a.pose.theta);
        Pose::from_parts(pos, theta)
    }

    pub fn velocity_at(&self, t: f64) -> Vec2 {
        let wps = &self.waypoints;
        if wps.len() < 2 || t < wps[0].time || t >= wps[wps.len() - 1].time {
            return Vec2::ZERO;
        }
        let k = wps.partition_point(|w| w.time <= t);
        let (a, b) = (wps[k - 1], wps[k]);
        (b.pose.position() - a.pose.position()) * (1.0 / (b.time - a.time))
    }
}

/// Follower kinematic limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    /// Physical speed limit (m/s).
    pub v_max_physical: f64,
    pub omega_max: f64,
    pub a_max: f64,
    pub footprint_radius: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        Self {
            v_max_physical: 1.5,
            omega_max: 2.0,
            a_max: 1.5,
            footprint_radius: 0.3,
        }
    }
}

impl RobotModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.v_max_physical > 0.0 && self.omega_max > 0.0 && self.a_max > 0.0 && self.footprint_radius > 0.0
        {
            Ok(())
        } else {
            Err(SimError::InvalidConfig("robot limits must be positive".into()))
        }
    }
}

/// Linear and angular velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub v: f64,
    pub omega: f64,
}

/// Unicycle follower.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Robot {
    pub pose: Pose,
    pub twist: Twist,
}

impl Robot {
    pub fn new(pose: Pose) -> Self {
        Self {
            pose,
            twist: Twist::default(),
        }
    }

    /// Applies a command under speed, turn-rate and acceleration limits and integrates
    /// the unicycle over `dt` (midpoint heading).
    pub fn apply(&mut self, cmd: Twist, model: &RobotModel, dt: f64) {
        let dv_max = model.a_max * dt;
        let v = cmd
            .v
            .clamp(-model.v_max_physical, model.v_max_physical)
            .clamp(self.twist.v - dv_max, self.twist.v + dv_max);
        let omega = cmd.omega.clamp(-model.omega_max, model.omega_max);
        let mid = self.pose.theta + 0.5 * omega * dt;
        self.pose = Pose::new(
            self.pose.x + v * dt * mid.cos(),
            self.pose.y + v * dt * mid.sin(),
            self.pose.theta + omega * dt,
        );
        self.twist = Twist { v, omega };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub min: Vec2,
    pub max: Vec2,
}

impl Arena {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// The simulated world. A plain value: clone it to fork a run.
#[derive(Debug, Clone)]
pub struct World {
    pub time: f64,
    pub arena: Arena,
    pub obstacles: Vec<Obstacle>,
    pub leaders: Vec<LeaderScript>,
}

impl World {
    /// Builds a world. Every dynamic obstacle gets an independent generator derived from `seed`.
    pub fn new(
        arena: Arena,
        obstacles: &[ObstacleConfig],
        leaders: Vec<LeaderScript>,
        seed: u64,
    ) -> Result<Self, SimError> {
        if arena.max.x <= arena.min.x || arena.max.y <= arena.min.y {
            return Err(SimError::InvalidConfig("arena bounds are empty".into()));
        }
        for l in &leaders {
            l.validate()?;
        }
        let mut out = Vec::with_capacity(obstacles.len());
        for (id, cfg) in obstacles.iter().enumerate() {
            cfg.shape.validate()?;
            if cfg.kind == ObstacleKind::Dynamic && cfg.resample_period <= 0.0 {
                return Err(SimError::InvalidConfig(
                    "resample_period must be positive".into(),
                ));
            }
            let stream = seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(id as u64 + 1);
            out.push(Obstacle {
                id,
                shape: cfg.shape.clone(),
                kind: cfg.kind,
                velocity: if cfg.kind == ObstacleKind::Dynamic {
                    cfg.velocity
                } else {
                    Vec2::ZERO
                },
                resample_period: cfg.resample_period,
                speed_band: cfg.speed_band,
                next_resample: cfg.resample_period,
                rng: ChaCha8Rng::seed_from_u64(stream),
            });
        }
        Ok(Self {
            time: 0.0,
            arena,
            obstacles: out,
            leaders,
        })
    }

    /// Advances leaders along their scripts and dynamic obstacles along their velocities.
    pub fn step(&mut self, dt: f64) {
        assert!(dt > 0.0, "dt must be positive");
        let t_next = self.time + dt;
        let arena = self.arena;
        for obs in self.obstacles.iter_mut() {
            if obs.kind != ObstacleKind::Dynamic {
                continue;
            }
            obs.shape.translate(obs.velocity * dt);
            // keep inside the arena by reflecting off its walls
            let (lo, hi) = obs.shape.bounds();
            let mut shift = Vec2::ZERO;
            if lo.x < arena.min.x {
                shift.x = arena.min.x - lo.x;
                obs.velocity.x = obs.velocity.x.abs();
            } else if hi.x > arena.max.x {
                shift.x = arena.max.x - hi.x;
                obs.velocity.x = -obs.velocity.x.abs();
            }
            if lo.y < arena.min.y {
                shift.y = arena.min.y - lo.y;
                obs.velocity.y = obs.velocity.y.abs();
            } else if hi.y > arena.max.y {
                shift.y = arena.max.y - hi.y;
                obs.velocity.y = -obs.velocity.y.abs();
            }
            obs.shape.translate(shift);
            while t_next >= obs.next_resample - 1e-9 {
                obs.resample_velocity();
                obs.next_resample += obs.resample_period;
            }
        }
        self.time = t_next;
    }

    pub fn leader_pose(&self, idx: usize) -> Pose {
        self.leaders[idx].pose_at(self.time)
    }

    pub fn leader_velocity(&self, idx: usize) -> Vec2 {
        self.leaders[idx].velocity_at(self.time)
    }

    /// Whether a follower footprint at `p` overlaps any obstacle (all kinds block the follower).
    pub fn follower_collides(&self, p: Vec2, radius: f64) -> Option<ObjectRef> {
        for o in &self.obstacles {
            if o.shape.signed_distance(p) < radius {
                return Some(ObjectRef::Obstacle(o.id));
            }
        }
        None
    }

    /// Whether a leader at its current pose overlaps an obstacle it cannot pass.
    pub fn leader_collides(&self, idx: usize) -> bool {
        let l = &self.leaders[idx];
        let p = self.leader_pose(idx).position();
        self.obstacles
            .iter()
            .any(|o| o.blocks_leader(l.flies_over) && o.shape.signed_distance(p) < l.radius)
    }
}

/// Functional form of [`World::step`].
pub fn step_world(world: &World, dt: f64) -> World {
    let mut next = world.clone();
    next.step(dt);
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn arena() -> Arena {
        Arena {
            min: Vec2::new(-20.0, -20.0),
            max: Vec2::new(20.0, 20.0),
        }
    }

    #[test]
    fn static_world_does_not_move() {
        let obstacles = vec![ObstacleConfig::fixed(Shape::disc(Vec2::new(1.0, 2.0), 0.5))];
        let w0 = World::new(arena(), &obstacles, vec![], 1).unwrap();
        let w1 = step_world(&w0, 0.1);
        assert_eq!(w0.obstacles[0].shape, w1.obstacles[0].shape);
    }

    #[test]
    fn dynamic_disc_moves_linearly() {
        let obstacles = vec![ObstacleConfig::dynamic(
            Shape::disc(Vec2::ZERO, 0.5),
            Vec2::new(1.0, 0.0),
            3.0,
            [0.2, 0.6],
        )];
        let mut w = World::new(arena(), &obstacles, vec![], 1).unwrap();
        w.step(0.5);
        match &w.obstacles[0].shape {
            Shape::Disc { center, .. } => {
                assert_relative_eq!(center.x, 0.5);
                assert_relative_eq!(center.y, 0.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn velocity_resampled_once_across_period_boundary() {
        let obstacles = vec![ObstacleConfig::dynamic(
            Shape::disc(Vec2::ZERO, 0.5),
            Vec2::new(0.3, 0.0),
            3.0,
            [0.2, 0.6],
        )];
        let mut w = World::new(arena(), &obstacles, vec![], 7).unwrap();
        w.step(2.8);
        let v0 = w.obstacles[0].velocity;
        w.step(0.1); // t = 2.9
        let v1 = w.obstacles[0].velocity;
        assert_eq!(v0, v1);
        w.step(0.2); // t = 3.1
        let v2 = w.obstacles[0].velocity;
        assert_ne!(v1, v2);
        let speed = v2.norm();
        assert!((0.2..0.6).contains(&speed));
        w.step(0.1);
        assert_eq!(w.obstacles[0].velocity, v2);
    }

    #[test]
    fn same_seed_same_world() {
        let obstacles = vec![ObstacleConfig::dynamic(
            Shape::disc(Vec2::ZERO, 0.5),
            Vec2::new(0.3, 0.0),
            1.0,
            [0.2, 0.6],
        )];
        let mut a = World::new(arena(), &obstacles, vec![], 3).unwrap();
        let mut b = World::new(arena(), &obstacles, vec![], 3).unwrap();
        for _ in 0..100 {
            a.step(0.1);
            b.step(0.1);
        }
        assert_eq!(a.obstacles[0].shape, b.obstacles[0].shape);
        assert_eq!(a.obstacles[0].velocity, b.obstacles[0].velocity);
    }

    #[test]
    fn dynamic_obstacle_stays_in_arena() {
        let obstacles = vec![ObstacleConfig::dynamic(
            Shape::disc(Vec2::new(19.0, 0.0), 0.5),
            Vec2::new(2.0, 0.0),
            100.0,
            [0.2, 0.6],
        )];
        let mut w = World::new(arena(), &obstacles, vec![], 3).unwrap();
        for _ in 0..20 {
            w.step(0.1);
            let (lo, hi) = w.obstacles[0].shape.bounds();
            assert!(lo.x >= -20.0 - 1e-9 && hi.x <= 20.0 + 1e-9);
        }
        assert!(w.obstacles[0].velocity.x < 0.0);
    }

    #[test]
    fn script_interpolates_between_waypoints() {
        let s = LeaderScript::new(
            "l",
            1,
            vec![
                Waypoint {
                    time: 0.0,
                    pose: Pose::new(0.0, 0.0, 0.0),
                },
                Waypoint {
                    time: 2.0,
                    pose: Pose::new(2.0, 4.0, 1.0),
                },
            ],
        );
        let p = s.pose_at(1.0);
        assert_relative_eq!(p.x, 1.0);
        assert_relative_eq!(p.y, 2.0);
        assert_relative_eq!(p.theta, 0.5);
        assert_eq!(s.pose_at(5.0), Pose::new(2.0, 4.0, 1.0));
        assert_relative_eq!(s.velocity_at(1.0).y, 2.0);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad_disc = vec![ObstacleConfig::fixed(Shape::Disc {
            center: Vec2::ZERO,
            radius: 0.0,
        })];
        assert!(World::new(arena(), &bad_disc, vec![], 0).is_err());
        let cw = vec![ObstacleConfig::fixed(Shape::Polygon {
            vertices: vec![Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(1.0, 0.0)],
        })];
        assert!(World::new(arena(), &cw, vec![], 0).is_err());
        let script = LeaderScript::new(
            "x",
            0,
            vec![
                Waypoint {
                    time: 1.0,
                    pose: Pose::default(),
                },
                Waypoint {
                    time: 1.0,
                    pose: Pose::default(),
                },
            ],
        );
        assert!(World::new(arena(), &[], vec![script], 0).is_err());
    }

    #[test]
    fn overflyable_blocks_follower_not_flying_leader() {
        let obstacles = vec![ObstacleConfig::overflyable(Shape::disc(Vec2::ZERO, 1.0))];
        let mut uav = LeaderScript::new(
            "uav",
            1,
            vec![Waypoint {
                time: 0.0,
                pose: Pose::new(0.0, 0.0, 0.0),
            }],
        );
        uav.flies_over = true;
        let mut walker = uav.clone();
        walker.flies_over = false;
        let w = World::new(arena(), &obstacles, vec![uav, walker], 0).unwrap();
        assert!(!w.leader_collides(0));
        assert!(w.leader_collides(1));
        assert!(w.follower_collides(Vec2::ZERO, 0.3).is_some());
    }

    #[test]
    fn robot_respects_limits() {
        let model = RobotModel::default();
        let mut r = Robot::new(Pose::new(0.0, 0.0, 0.0));
        r.apply(Twist { v: 10.0, omega: 10.0 }, &model, 0.1);
        assert_relative_eq!(r.twist.v, model.a_max * 0.1);
        assert_relative_eq!(r.twist.omega, model.omega_max);
    }
}
