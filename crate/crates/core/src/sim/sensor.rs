use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ObstacleKind, SimError, World};
use crate::geometry::{angle_diff, ray_circle, Pose, Vec2};

/// Number of boundary samples used for the leader visibility fraction.
pub const OUTLINE_SAMPLES: usize = 16;

/// Camera cone plus planar range scanner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    /// Half-angle of the camera cone used to see the leader (rad).
    pub fov_half_angle: f64,
    pub range: f64,
    pub ray_count: usize,
    pub scan_noise_sigma: f64,
    /// Half-angle covered by the range scanner; π is a full 360° sweep.
    #[serde(default = "default_scan_half_angle")]
    pub scan_half_angle: f64,
}

fn default_scan_half_angle() -> f64 {
    PI
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            fov_half_angle: 0.8,
            range: 12.0,
            ray_count: 360,
            scan_noise_sigma: 0.01,
            scan_half_angle: PI,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.fov_half_angle > 0.0 && self.fov_half_angle <= PI) {
            return Err(SimError::InvalidConfig("fov_half_angle must be in (0, π]".into()));
        }
        if self.range <= 0.0 || self.ray_count == 0 || self.scan_noise_sigma < 0.0 {
            return Err(SimError::InvalidConfig("invalid sensor range/rays/noise".into()));
        }
        Ok(())
    }

    /// Whether a world point lies inside the camera cone and range.
    pub fn in_camera(&self, robot: &Pose, p: Vec2) -> bool {
        let d = p - robot.position();
        d.norm() <= self.range && angle_diff(d.angle(), robot.theta).abs() <= self.fov_half_angle
    }
}

/// Identifies what a ray or sight line hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectRef {
    Obstacle(usize),
    Leader(usize),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LeaderObservation {
    pub visible: bool,
    pub visible_fraction: f64,
    pub in_fov: bool,
    /// Leader surface points in the world frame.
    pub point_set: Vec<Vec2>,
    pub occluder_id: Option<ObjectRef>,
}

impl LeaderObservation {
    pub fn mean_point(&self) -> Option<Vec2> {
        if self.point_set.is_empty() {
            return None;
        }
        let s = self.point_set.iter().fold(Vec2::ZERO, |acc, &p| acc + p);
        Some(s * (1.0 / self.point_set.len() as f64))
    }
}

/// A moving obstacle picked up by the scanner, reported with its motion state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackedObstacle {
    pub id: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensorFrame {
    /// Range returns in the robot frame, leader and tracked moving obstacles excluded.
    pub scan: Vec<Vec2>,
    pub observation: LeaderObservation,
    pub tracked: Vec<TrackedObstacle>,
}

/// Boundary samples of a disc leader, counterclockwise from +x.
pub fn leader_outline(center: Vec2, radius: f64, samples: usize) -> Vec<Vec2> {
    (0..samples)
        .map(|k| center + Vec2::from_angle(2.0 * PI * k as f64 / samples as f64) * radius)
        .collect()
}

/// Seeded sensor. Noise draws come from its own generator.
#[derive(Debug, Clone)]
pub struct Sensor {
    pub model: SensorModel,
    rng: ChaCha8Rng,
}

impl Sensor {
    pub fn new(model: SensorModel, seed: u64) -> Self {
        Self {
            model,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Nearest hit along a ray among every object in the world.
    fn cast(world: &World, origin: Vec2, dir: Vec2) -> Option<(f64, ObjectRef)> {
        let mut best: Option<(f64, ObjectRef)> = None;
        let mut consider = |t: Option<f64>, who: ObjectRef| {
            if let Some(t) = t {
                if best.map_or(true, |(bt, _)| t < bt) {
                    best = Some((t, who));
                }
            }
        };
        for o in &world.obstacles {
            consider(o.shape.ray_hit(origin, dir), ObjectRef::Obstacle(o.id));
        }
        for (i, l) in world.leaders.iter().enumerate() {
            let c = world.leader_pose(i).position();
            consider(ray_circle(origin, dir, c, l.radius), ObjectRef::Leader(i));
        }
        best
    }

    /// Nearest object that hides leader `target` along a sight line, closer than `limit`.
    fn occluder(world: &World, target: usize, origin: Vec2, dir: Vec2, limit: f64) -> Option<ObjectRef> {
        let flies = world.leaders[target].flies_over;
        let mut best: Option<(f64, ObjectRef)> = None;
        for o in world.obstacles.iter().filter(|o| o.blocks_leader(flies)) {
            if let Some(t) = o.shape.ray_hit(origin, dir) {
                if t < limit - 1e-9 && best.map_or(true, |(bt, _)| t < bt) {
                    best = Some((t, ObjectRef::Obstacle(o.id)));
                }
            }
        }
        for (i, l) in world.leaders.iter().enumerate() {
            if i == target {
                continue;
            }
            let c = world.leader_pose(i).position();
            if let Some(t) = ray_circle(origin, dir, c, l.radius) {
                if t < limit - 1e-9 && best.map_or(true, |(bt, _)| t < bt) {
                    best = Some((t, ObjectRef::Leader(i)));
                }
            }
        }
        best.map(|(_, who)| who)
    }

    /// Visibility of each outline sample: `(in_camera, unoccluded, occluder)`.
    pub fn outline_visibility(
        &self,
        world: &World,
        robot: &Pose,
        target: usize,
        samples: usize,
    ) -> Vec<(bool, bool, Option<ObjectRef>)> {
        let leader = &world.leaders[target];
        let c = world.leader_pose(target).position();
        let origin = robot.position();
        leader_outline(c, leader.radius, samples)
            .into_iter()
            .map(|q| {
                let in_cam = self.model.in_camera(robot, q);
                if !in_cam {
                    return (false, false, None);
                }
                let d = q - origin;
                let dist = d.norm();
                if dist < 1e-9 {
                    return (true, true, None);
                }
                let occ = Self::occluder(world, target, origin, d * (1.0 / dist), dist);
                (true, occ.is_none(), occ)
            })
            .collect()
    }

    /// Scans the world from `robot` and observes leader `target`.
    pub fn sense(&mut self, world: &World, robot: &Pose, target: usize) -> SensorFrame {
        let m = self.model;
        let origin = robot.position();
        let noise = Normal::new(0.0, m.scan_noise_sigma.max(1e-12)).expect("valid sigma");
        let full_circle = m.scan_half_angle >= PI - 1e-12;
        let span = 2.0 * m.scan_half_angle;
        let step = if full_circle || m.ray_count == 1 {
            span / m.ray_count as f64
        } else {
            span / (m.ray_count - 1) as f64
        };
        let flies = world.leaders[target].flies_over;
        let target_center = world.leader_pose(target).position();
        let target_radius = world.leaders[target].radius;

        let mut scan = Vec::with_capacity(m.ray_count);
        let mut point_set = Vec::new();
        let mut seen_dynamic = vec![false; world.obstacles.len()];
        for k in 0..m.ray_count {
            let rel = -m.scan_half_angle + step * k as f64;
            let dir = Vec2::from_angle(robot.theta + rel);
            let nz = if m.scan_noise_sigma > 0.0 {
                noise.sample(&mut self.rng)
            } else {
                0.0
            };
            let in_cam = rel.abs() <= m.fov_half_angle;
            let mut leader_hit = false;
            if in_cam {
                if let Some(t) = ray_circle(origin, dir, target_center, target_radius) {
                    if t <= m.range {
                        let blocked = Self::occluder(world, target, origin, dir, t).is_some();
                        if !blocked {
                            point_set.push(origin + dir * (t + nz));
                            leader_hit = true;
                        }
                    }
                }
            }
            if let Some((t, who)) = Self::cast(world, origin, dir) {
                if t > m.range {
                    continue;
                }
                match who {
                    ObjectRef::Leader(i) if i == target && leader_hit => {}
                    ObjectRef::Obstacle(id) if world.obstacles[id].kind == ObstacleKind::Dynamic => {
                        seen_dynamic[id] = true;
                    }
                    ObjectRef::Obstacle(id)
                        if leader_hit && flies && world.obstacles[id].kind == ObstacleKind::Overflyable =>
                    {
                        scan.push(robot.inverse_transform_point(origin + dir * (t + nz)));
                    }
                    _ => scan.push(robot.inverse_transform_point(origin + dir * (t + nz))),
                }
            }
        }

        let vis = self.outline_visibility(world, robot, target, OUTLINE_SAMPLES);
        let in_fov = vis.iter().any(|v| v.0);
        let unoccluded = vis.iter().filter(|v| v.1).count();
        let visible_fraction = unoccluded as f64 / OUTLINE_SAMPLES as f64;
        let occluder_id = most_common(vis.iter().filter_map(|v| v.2));
        let visible = visible_fraction > 0.0 && !point_set.is_empty();
        if !visible {
            // an unseen leader still returns range points; they belong to the scan
            for p in point_set.drain(..) {
                scan.push(robot.inverse_transform_point(p));
            }
        }

        let tracked = world
            .obstacles
            .iter()
            .filter(|o| seen_dynamic[o.id])
            .map(|o| {
                let (lo, hi) = o.shape.bounds();
                TrackedObstacle {
                    id: o.id,
                    position: o.shape.centroid(),
                    velocity: o.velocity,
                    radius: 0.5 * (hi - lo).norm(),
                }
            })
            .collect();

        SensorFrame {
            scan,
            observation: LeaderObservation {
                visible,
                visible_fraction,
                in_fov,
                point_set,
                occluder_id,
            },
            tracked,
        }
    }
}

fn most_common(items: impl Iterator<Item = ObjectRef>) -> Option<ObjectRef> {
    let mut counts: Vec<(ObjectRef, usize)> = Vec::new();
    for it in items {
        match counts.iter_mut().find(|(o, _)| *o == it) {
            Some((_, c)) => *c += 1,
            None => counts.push((it, 1)),
        }
    }
    counts
        .into_iter()
        .max_by_key(|&(_, c)| c)
        .map(|(o, _)| o)
}

/// Time-stamped leader observations for mean-state estimation.
#[derive(Debug, Clone, Default)]
pub struct ObservationHistory {
    entries: VecDeque<(f64, Option<Vec2>)>,
    max_age: f64,
}

impl ObservationHistory {
    pub fn new(max_age: f64) -> Self {
        Self {
            entries: VecDeque::new(),
            max_age,
        }
    }

    /// Records an observation; invisible ones only advance the clock.
    pub fn push(&mut self, t: f64, obs: &LeaderObservation) {
        let mean = if obs.visible { obs.mean_point() } else { None };
        self.push_mean(t, mean);
    }

    pub fn push_mean(&mut self, t: f64, mean: Option<Vec2>) {
        self.entries.push_back((t, mean));
        while let Some(&(t0, _)) = self.entries.front() {
            if t - t0 > self.max_age {
                self.entries.pop_front();
            } else {
                break;
            }
        }
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Mean position of the latest visible point set and the finite-difference velocity
    /// over `window` seconds.
    pub fn mean_state(&self, window: f64) -> Result<(Vec2, Vec2), SimError> {
        let now = match self.entries.back() {
            Some(&(t, _)) => t,
            None => return Err(SimError::NoVisibleLeader { window }),
        };
        let visible: Vec<(f64, Vec2)> = self
            .entries
            .iter()
            .filter_map(|&(t, m)| m.map(|m| (t, m)))
            .filter(|&(t, _)| t >= now - window - 1e-9)
            .collect();
        let &(t_cur, p_cur) = visible.last().ok_or(SimError::NoVisibleLeader { window })?;
        let &(t_ref, p_ref) = visible
            .iter()
            .find(|&&(t, _)| t >= t_cur - window - 1e-9)
            .expect("current entry is inside its own window");
        let dt = t_cur - t_ref;
        let v = if dt > 1e-9 {
            (p_cur - p_ref) * (1.0 / dt)
        } else {
            Vec2::ZERO
        };
        Ok((p_cur, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;
    use crate::sim::{Arena, LeaderScript, ObstacleConfig, Shape, Waypoint};
    use approx::assert_relative_eq;

    fn world_with(obstacles: Vec<ObstacleConfig>, leader_at: Vec2) -> World {
        let script = LeaderScript::new(
            "leader",
            1,
            vec![Waypoint {
                time: 0.0,
                pose: Pose::new(leader_at.x, leader_at.y, 0.0),
            }],
        );
        World::new(
            Arena {
                min: Vec2::new(-20.0, -20.0),
                max: Vec2::new(20.0, 20.0),
            },
            &obstacles,
            vec![script],
            0,
        )
        .unwrap()
    }

    fn noiseless() -> SensorModel {
        SensorModel {
            scan_noise_sigma: 0.0,
            ..SensorModel::default()
        }
    }

    #[test]
    fn leader_behind_robot_is_out_of_fov() {
        let w = world_with(vec![], Vec2::new(-3.0, 0.0));
        let mut s = Sensor::new(noiseless(), 0);
        let f = s.sense(&w, &Pose::new(0.0, 0.0, 0.0), 0);
        assert!(!f.observation.in_fov);
        assert!(!f.observation.visible);
        // the leader still shows up as an obstacle in the scan
        assert!(!f.scan.is_empty());
    }

    #[test]
    fn unoccluded_leader_fully_visible() {
        let w = world_with(vec![], Vec2::new(2.0, 0.0));
        let mut s = Sensor::new(noiseless(), 0);
        let f = s.sense(&w, &Pose::new(0.0, 0.0, 0.0), 0);
        assert!(f.observation.visible);
        assert_relative_eq!(f.observation.visible_fraction, 1.0);
        assert!(f.scan.is_empty(), "leader points must be excluded from the scan");
        for p in &f.observation.point_set {
            assert_relative_eq!(p.distance(Vec2::new(2.0, 0.0)), 0.3, epsilon = 1e-9);
        }
    }

    /// Independent oracle: dense sampling of the outline with segment/polygon tests.
    fn dense_fraction(wall: &Polygon, robot: Vec2, center: Vec2, radius: f64, n: usize) -> f64 {
        let pts = leader_outline(center, radius, n);
        let free = pts
            .iter()
            .filter(|&&q| {
                !wall.edges().any(|(a, b)| crate::geometry::segments_intersect(robot, q, a, b))
            })
            .count();
        free as f64 / n as f64
    }

    #[test]
    fn half_hidden_leader_fraction_matches_dense_oracle() {
        // wall edge at y = 0 bisects the leader outline as seen from far away
        let wall = Polygon::rect(Vec2::new(3.0, -3.0), Vec2::new(3.2, 0.0));
        let w = world_with(vec![ObstacleConfig::fixed(Shape::polygon(wall.vertices.clone()))], Vec2::new(6.0, 0.0));
        let mut s = Sensor::new(noiseless(), 0);
        let f = s.sense(&w, &Pose::new(0.0, 0.0, 0.0), 0);
        let oracle = dense_fraction(&wall, Vec2::ZERO, Vec2::new(6.0, 0.0), 0.3, 160);
        assert!((f.observation.visible_fraction - 0.5).abs() <= 0.1);
        assert!((f.observation.visible_fraction - oracle).abs() <= 0.1);
        assert_eq!(f.observation.occluder_id, Some(ObjectRef::Obstacle(0)));
    }

    #[test]
    fn visible_implies_some_clear_sight_line() {
        let wall = Polygon::rect(Vec2::new(3.0, -3.0), Vec2::new(3.2, 0.1));
        let w = world_with(vec![ObstacleConfig::fixed(Shape::polygon(wall.vertices.clone()))], Vec2::new(6.0, 0.0));
        let mut s = Sensor::new(noiseless(), 0);
        let f = s.sense(&w, &Pose::new(0.0, 0.0, 0.0), 0);
        if f.observation.visible {
            assert!(dense_fraction(&wall, Vec2::ZERO, Vec2::new(6.0, 0.0), 0.3, 160) > 0.0);
        }
    }

    #[test]
    fn overflyable_does_not_hide_flying_leader() {
        let mut w = world_with(
            vec![ObstacleConfig::overflyable(Shape::disc(Vec2::new(3.0, 0.0), 0.6))],
            Vec2::new(6.0, 0.0),
        );
        let mut s = Sensor::new(noiseless(), 0);
        let f = s.sense(&w, &Pose::new(0.0, 0.0, 0.0), 0);
        assert!(!f.observation.visible);
        w.leaders[0].flies_over = true;
        let f = s.sense(&w, &Pose::new(0.0, 0.0, 0.0), 0);
        assert!(f.observation.visible);
        assert_relative_eq!(f.observation.visible_fraction, 1.0);
        // the box is still in the scan
        assert!(!f.scan.is_empty());
    }

    #[test]
    fn dynamic_obstacles_are_tracked_not_scanned() {
        let w = world_with(
            vec![ObstacleConfig::dynamic(
                Shape::disc(Vec2::new(0.0, 3.0), 0.4),
                Vec2::new(0.5, 0.0),
                3.0,
                [0.2, 0.6],
            )],
            Vec2::new(4.0, 0.0),
        );
        let mut s = Sensor::new(noiseless(), 0);
        let f = s.sense(&w, &Pose::new(0.0, 0.0, 0.0), 0);
        assert!(f.scan.is_empty());
        assert_eq!(f.tracked.len(), 1);
        assert_relative_eq!(f.tracked[0].velocity.x, 0.5);
    }

    #[test]
    fn mean_state_examples() {
        let obs = |pts: Vec<Vec2>| LeaderObservation {
            visible: true,
            visible_fraction: 1.0,
            in_fov: true,
            point_set: pts,
            occluder_id: None,
        };
        let mut h = ObservationHistory::new(10.0);
        h.push(1.0, &obs(vec![Vec2::new(1.0, 0.0), Vec2::new(3.0, 0.0)]));
        let (p, v) = h.mean_state(0.5).unwrap();
        assert_eq!(p, Vec2::new(2.0, 0.0));
        assert_eq!(v, Vec2::ZERO);
        h.push(1.5, &obs(vec![Vec2::new(3.0, 0.0)]));
        let (p, v) = h.mean_state(0.5).unwrap();
        assert_eq!(p, Vec2::new(3.0, 0.0));
        assert_relative_eq!(v.x, 2.0);
        assert_relative_eq!(v.y, 0.0);

        let mut still = ObservationHistory::new(10.0);
        for k in 0..10 {
            still.push(k as f64 * 0.1, &obs(vec![Vec2::new(5.0, 5.0)]));
        }
        assert_eq!(still.mean_state(0.5).unwrap().1, Vec2::ZERO);

        let mut gone = ObservationHistory::new(10.0);
        gone.push(0.0, &obs(vec![Vec2::new(1.0, 1.0)]));
        gone.push(2.0, &LeaderObservation::default());
        assert_eq!(
            gone.mean_state(0.5),
            Err(SimError::NoVisibleLeader { window: 0.5 })
        );
    }

    #[test]
    fn sensing_is_deterministic_per_seed() {
        let w = world_with(
            vec![ObstacleConfig::fixed(Shape::disc(Vec2::new(2.0, 2.0), 0.5))],
            Vec2::new(4.0, 0.0),
        );
        let mut a = Sensor::new(SensorModel::default(), 9);
        let mut b = Sensor::new(SensorModel::default(), 9);
        let fa = a.sense(&w, &Pose::new(0.0, 0.0, 0.3), 0);
        let fb = b.sense(&w, &Pose::new(0.0, 0.0, 0.3), 0);
        assert_eq!(fa, fb);
    }
}
