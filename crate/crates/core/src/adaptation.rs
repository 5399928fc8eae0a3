//! Goal-aware follower state machine and the goal sets each state hands to the planner.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmap::Costmap;
use crate::geometry::{Polygon, Vec2};
use crate::perception::{Embedding, LeaderMemory, LeaderTrack};
use crate::trajopt::{convex_signed_distance, GoalConstraint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FollowState {
    Chasing,
    Following,
    Planning,
    Retreating,
    Switching,
}

/// What the follower knows about the leader this tick.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Flags {
    pub in_fov: bool,
    pub identified: bool,
    pub in_costmap: bool,
    pub distance: f64,
    pub leader_approaching: bool,
    pub new_leader_command: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptationParams {
    /// Goal line length per meter beyond the map edge.
    pub alpha_goal_line: f64,
    /// Safe distance per unit NIS (m).
    pub alpha_nis: f64,
    pub d_min: f64,
    pub d_max: f64,
    /// Speed cap gain on leader speed.
    pub alpha_1: f64,
    /// Speed cap gain on leader distance (1/s).
    pub alpha_2: f64,
    pub epsilon: f64,
    pub retreat_trigger_speed: f64,
    pub hysteresis_time: f64,
    /// Required clearance of goal sets from obstacle hulls (m).
    pub margin: f64,
}

impl Default for AdaptationParams {
    fn default() -> Self {
        Self {
            alpha_goal_line: 0.5,
            alpha_nis: 0.3,
            d_min: 1.0,
            d_max: 3.0,
            alpha_1: 1.0,
            alpha_2: 0.3,
            epsilon: 0.2,
            retreat_trigger_speed: 0.3,
            hysteresis_time: 0.3,
            margin: 0.1,
        }
    }
}

impl AdaptationParams {
    pub fn validate(&self) -> Result<(), AdaptationError> {
        let ok = 0.0 < self.d_min
            && self.d_min < self.d_max
            && self.alpha_goal_line > 0.0
            && self.alpha_nis > 0.0
            && self.alpha_1 > 0.0
            && self.alpha_2 > 0.0
            && self.epsilon > 0.0
            && self.hysteresis_time >= 0.0
            && self.margin >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(AdaptationError::InvalidParams)
        }
    }
}

/// Output of one adaptation tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickDecision {
    pub state: FollowState,
    /// Goal sets in preference order; the first is the initial goal.
    pub goals: Vec<GoalConstraint>,
    pub v_cap: f64,
    pub safe_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AdaptationError {
    #[error("leader lies inside the costmap")]
    LeaderInsideMap,
    #[error("every point of the goal circle is blocked")]
    NoFreeArc,
    #[error("the whole goal line is blocked")]
    NoFreeLine,
    #[error("the leader was never seen")]
    NeverSeen,
    #[error("invalid adaptation parameters")]
    InvalidParams,
}

/// Undebounced transition table.
pub fn transition(_prev: FollowState, flags: &Flags) -> FollowState {
    if flags.new_leader_command {
        FollowState::Switching
    } else if !(flags.in_fov && flags.identified) {
        FollowState::Planning
    } else if !flags.in_costmap {
        FollowState::Chasing
    } else if flags.leader_approaching {
        FollowState::Retreating
    } else {
        FollowState::Following
    }
}

/// Leader closing in on the robot fast enough to warrant backing off.
pub fn leader_approaching(robot: Vec2, leader: Vec2, leader_velocity: Vec2, safe_distance: f64, params: &AdaptationParams) -> bool {
    let to_robot = robot - leader;
    let d = to_robot.norm();
    if d < 1e-9 {
        return true;
    }
    leader_velocity.dot(to_robot) / d > params.retreat_trigger_speed && d < 1.5 * safe_distance
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub time: f64,
    pub from: FollowState,
    pub to: FollowState,
    pub flags: Flags,
}

/// Debounced state machine: a state is held for at least `hysteresis_time`, except that
/// switch commands act at once and Switching lasts exactly one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMachine {
    pub state: FollowState,
    pub entered_at: f64,
    pub events: Vec<TransitionEvent>,
}

impl StateMachine {
    pub fn new(initial: FollowState) -> Self {
        Self {
            state: initial,
            entered_at: f64::NEG_INFINITY,
            events: Vec::new(),
        }
    }

    pub fn update(&mut self, time: f64, flags: &Flags, params: &AdaptationParams) -> FollowState {
        let raw = transition(self.state, flags);
        let next = if raw == self.state {
            return self.state;
        } else if raw == FollowState::Switching
            || self.state == FollowState::Switching
            || time - self.entered_at + 1e-9 >= params.hysteresis_time
        {
            raw
        } else {
            self.state
        };
        if next != self.state {
            self.events.push(TransitionEvent {
                time,
                from: self.state,
                to: next,
                flags: *flags,
            });
            self.state = next;
            self.entered_at = time;
        }
        self.state
    }
}

/// Goal line length for a leader at distance `d` beyond a map of width `w`.
pub fn goal_line_length(d: f64, w: f64, params: &AdaptationParams) -> f64 {
    params.alpha_goal_line * (d - w / 2.0)
}

/// Shortest goal line or arc handed to the planner (m or rad).
pub const MIN_GOAL_EXTENT: f64 = 0.2;

fn clearance(hulls: &[Polygon], p: Vec2) -> f64 {
    hulls
        .iter()
        .map(|h| convex_signed_distance(h, p).0)
        .fold(f64::INFINITY, f64::min)
}

/// Refines the free/blocked boundary between parameters `free` and `blocked`.
fn bisect(mut free: f64, mut blocked: f64, is_free: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..30 {
        let mid = 0.5 * (free + blocked);
        if is_free(mid) {
            free = mid;
        } else {
            blocked = mid;
        }
    }
    free
}

/// Maximal free runs of `[0, 1]` under `is_free`, sampled `n` times and refined.
fn free_runs(n: usize, is_free: &impl Fn(f64) -> bool) -> Vec<(f64, f64)> {
    let samples: Vec<bool> = (0..=n).map(|k| is_free(k as f64 / n as f64)).collect();
    let mut runs = Vec::new();
    let mut k = 0;
    while k <= n {
        if !samples[k] {
            k += 1;
            continue;
        }
        let first = k;
        while k < n && samples[k + 1] {
            k += 1;
        }
        let lo = if first == 0 {
            0.0
        } else {
            bisect(first as f64 / n as f64, (first - 1) as f64 / n as f64, is_free)
        };
        let hi = if k == n {
            1.0
        } else {
            bisect(k as f64 / n as f64, (k + 1) as f64 / n as f64, is_free)
        };
        runs.push((lo, hi));
        k += 1;
    }
    runs
}

/// Goal lines along the costmap edge facing a leader outside the map.
pub fn chasing_goal(
    robot: Vec2,
    leader: Vec2,
    map: &Costmap,
    hulls: &[Polygon],
    params: &AdaptationParams,
) -> Result<Vec<GoalConstraint>, AdaptationError> {
    if map.contains(leader) {
        return Err(AdaptationError::LeaderInsideMap);
    }
    let half = map.width / 2.0;
    let base = map.edge_point_towards(leader);
    let rel = base - map.origin.position();
    let center = map.origin.position();
    let (dir, lo_bound, hi_bound) = if rel.x.abs() >= rel.y.abs() {
        (Vec2::new(0.0, 1.0), center.y - half, center.y + half)
    } else {
        (Vec2::new(1.0, 0.0), center.x - half, center.x + half)
    };
    let along = base.dot(dir);
    let length = goal_line_length(robot.distance(leader), map.width, params).max(MIN_GOAL_EXTENT);
    let a_s = (along - length / 2.0).max(lo_bound);
    let b_s = (along + length / 2.0).min(hi_bound);
    let a = base + dir * (a_s - along);
    let b = base + dir * (b_s - along);
    let is_free = |t: f64| clearance(hulls, a.lerp(b, t)) >= params.margin;
    let n = ((a.distance(b) / (map.resolution / 4.0)).ceil() as usize).max(8);
    let goals: Vec<GoalConstraint> = free_runs(n, &is_free)
        .into_iter()
        .filter(|(lo, hi)| (hi - lo) * a.distance(b) >= map.resolution / 2.0)
        .map(|(lo, hi)| GoalConstraint::LineSet {
            start: a.lerp(b, lo),
            end: a.lerp(b, hi),
        })
        .collect();
    if goals.is_empty() {
        Err(AdaptationError::NoFreeLine)
    } else {
        Ok(goals)
    }
}

/// Adaptive safe distance from the tracker's NIS.
pub fn safe_distance(nis: f64, params: &AdaptationParams) -> f64 {
    (params.alpha_nis * nis.max(0.0)).clamp(params.d_min, params.d_max)
}

/// Free arcs of the circle of radius `radius` around `leader`, in counterclockwise order.
fn free_arcs(leader: Vec2, radius: f64, hulls: &[Polygon], params: &AdaptationParams) -> Result<Vec<GoalConstraint>, AdaptationError> {
    let point = |phi: f64| leader + Vec2::from_angle(phi) * radius;
    let blocked_at = (0..720)
        .map(|k| k as f64 * TAU / 720.0)
        .find(|&phi| clearance(hulls, point(phi)) < params.margin);
    let Some(phi0) = blocked_at else {
        return Ok(vec![GoalConstraint::ArcSet {
            center: leader,
            radius,
            start_angle: 0.0,
            span: TAU,
            eps: params.epsilon,
        }]);
    };
    // parametrize from a blocked angle so no free run wraps around
    let is_free = |t: f64| clearance(hulls, point(phi0 + t * TAU)) >= params.margin;
    let arcs: Vec<GoalConstraint> = free_runs(720, &is_free)
        .into_iter()
        .filter(|(lo, hi)| (hi - lo) * TAU >= MIN_GOAL_EXTENT)
        .map(|(lo, hi)| GoalConstraint::ArcSet {
            center: leader,
            radius,
            start_angle: crate::geometry::normalize_angle(phi0 + lo * TAU),
            span: (hi - lo) * TAU,
            eps: params.epsilon,
        })
        .collect();
    if arcs.is_empty() {
        Err(AdaptationError::NoFreeArc)
    } else {
        Ok(arcs)
    }
}

/// Arcs around the leader at the safe distance, split by obstacles, ordered by distance to `robot`.
pub fn following_goal(
    leader: Vec2,
    safe_distance: f64,
    hulls: &[Polygon],
    robot: Vec2,
    params: &AdaptationParams,
) -> Result<Vec<GoalConstraint>, AdaptationError> {
    let mut arcs = free_arcs(leader, safe_distance, hulls, params)?;
    arcs.sort_by(|a, b| {
        let da = a.nearest_point(robot).distance(robot);
        let db = b.nearest_point(robot).distance(robot);
        da.total_cmp(&db)
    });
    Ok(arcs)
}

/// Like [`following_goal`]; the arc closest to the robot comes first as the initial goal.
pub fn retreating_goal(
    leader: Vec2,
    safe_distance: f64,
    hulls: &[Polygon],
    robot: Vec2,
    params: &AdaptationParams,
) -> Result<Vec<GoalConstraint>, AdaptationError> {
    following_goal(leader, safe_distance, hulls, robot, params)
}

/// `clamp(α₁‖v̄_l‖ + α₂‖p̄_l − p_r‖, 0, v_max)`.
pub fn speed_cap(leader_velocity: Vec2, leader: Vec2, robot: Vec2, params: &AdaptationParams, v_max: f64) -> f64 {
    (params.alpha_1 * leader_velocity.norm() + params.alpha_2 * leader.distance(robot)).clamp(0.0, v_max)
}

/// Speed cap for a state: full speed while chasing or planning.
pub fn state_speed_cap(
    state: FollowState,
    leader_velocity: Vec2,
    leader: Vec2,
    robot: Vec2,
    params: &AdaptationParams,
    v_max: f64,
) -> f64 {
    match state {
        FollowState::Chasing | FollowState::Planning => v_max,
        _ => speed_cap(leader_velocity, leader, robot, params, v_max),
    }
}

/// Head for the pose where the leader was last identified.
pub fn planning_goal(track: &LeaderTrack, params: &AdaptationParams) -> Result<GoalConstraint, AdaptationError> {
    let pose = track.last_seen_pose.ok_or(AdaptationError::NeverSeen)?;
    Ok(GoalConstraint::PointPose {
        pose,
        eps: params.epsilon,
    })
}

/// Forgets the old leader, seeds the buffers with the new one, and picks the state to continue in.
pub fn switching_reset(memory: &mut LeaderMemory, first: Embedding, flags: &Flags) -> FollowState {
    memory.reset_with(first);
    let flags = Flags {
        new_leader_command: false,
        ..*flags
    };
    transition(FollowState::Switching, &flags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose, Vec2};
    use crate::perception::MemoryConfig;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn flags(in_fov: bool, identified: bool, in_costmap: bool, approaching: bool) -> Flags {
        Flags {
            in_fov,
            identified,
            in_costmap,
            distance: 2.0,
            leader_approaching: approaching,
            new_leader_command: false,
        }
    }

    #[test]
    fn transition_table_examples() {
        use FollowState::*;
        assert_eq!(transition(Following, &flags(true, true, false, false)), Chasing);
        assert_eq!(transition(Following, &flags(false, true, true, false)), Planning);
        assert_eq!(transition(Following, &flags(true, false, true, false)), Planning);
        assert_eq!(transition(Following, &flags(true, true, true, true)), Retreating);
        assert_eq!(transition(Planning, &flags(true, true, true, false)), Following);
        let mut f = flags(false, false, false, false);
        f.new_leader_command = true;
        assert_eq!(transition(Planning, &f), Switching);
    }

    #[test]
    fn approaching_requires_speed_and_proximity() {
        let p = AdaptationParams::default();
        let robot = Vec2::new(0.0, 0.0);
        assert!(leader_approaching(robot, Vec2::new(1.5, 0.0), Vec2::new(-1.0, 0.0), 1.5, &p));
        assert!(!leader_approaching(robot, Vec2::new(4.0, 0.0), Vec2::new(-1.0, 0.0), 1.5, &p));
        assert!(!leader_approaching(robot, Vec2::new(1.5, 0.0), Vec2::new(1.0, 0.0), 1.5, &p));
    }

    #[test]
    fn hysteresis_holds_new_state() {
        let p = AdaptationParams::default();
        let mut sm = StateMachine::new(FollowState::Following);
        let lost = flags(false, false, true, false);
        let seen = flags(true, true, true, false);
        assert_eq!(sm.update(0.0, &lost, &p), FollowState::Planning);
        assert_eq!(sm.update(0.1, &seen, &p), FollowState::Planning);
        assert_eq!(sm.update(0.2, &seen, &p), FollowState::Planning);
        assert_eq!(sm.update(0.3, &seen, &p), FollowState::Following);
        assert_eq!(sm.events.len(), 2);
    }

    #[test]
    fn switching_lasts_one_tick() {
        let p = AdaptationParams::default();
        let mut sm = StateMachine::new(FollowState::Following);
        let mut f = flags(true, true, false, false);
        f.new_leader_command = true;
        assert_eq!(sm.update(1.0, &f, &p), FollowState::Switching);
        f.new_leader_command = false;
        assert_eq!(sm.update(1.1, &f, &p), FollowState::Chasing);
    }

    proptest! {
        #[test]
        fn flips_are_spaced_by_hysteresis(seq in proptest::collection::vec(any::<(bool, bool, bool, bool)>(), 1..200)) {
            let p = AdaptationParams::default();
            let mut sm = StateMachine::new(FollowState::Planning);
            for (k, (a, b, c, d)) in seq.iter().enumerate() {
                sm.update(k as f64 * 0.1, &flags(*a, *b, *c, *d), &p);
            }
            for w in sm.events.windows(2) {
                prop_assert!(w[1].time - w[0].time >= p.hysteresis_time - 1e-9);
            }
        }

        #[test]
        fn transition_is_total(a: bool, b: bool, c: bool, d: bool, e: bool) {
            let f = Flags { in_fov: a, identified: b, in_costmap: c, distance: 1.0, leader_approaching: d, new_leader_command: e };
            let s = transition(FollowState::Following, &f);
            prop_assert!(matches!(s, FollowState::Chasing | FollowState::Following | FollowState::Planning | FollowState::Retreating | FollowState::Switching));
        }

        #[test]
        fn safe_distance_is_clamped(nis in 0.0f64..1e4, alpha in 0.01f64..5.0) {
            let p = AdaptationParams { alpha_nis: alpha, ..Default::default() };
            let d = safe_distance(nis, &p);
            prop_assert!(d >= p.d_min && d <= p.d_max);
        }

        #[test]
        fn speed_cap_is_bounded(vx in -3.0f64..3.0, vy in -3.0f64..3.0, lx in -10.0f64..10.0, ly in -10.0f64..10.0) {
            let p = AdaptationParams::default();
            let v = speed_cap(Vec2::new(vx, vy), Vec2::new(lx, ly), Vec2::default(), &p, 1.5);
            prop_assert!((0.0..=1.5).contains(&v));
        }
    }

    #[test]
    fn goal_line_length_example() {
        assert!((goal_line_length(8.0, 8.0, &AdaptationParams::default()) - 2.0).abs() < 1e-12);
    }

    fn map_at_origin() -> Costmap {
        Costmap::empty(Pose::default(), &crate::costmap::CostmapConfig::default())
    }

    #[test]
    fn chasing_line_in_free_space() {
        let p = AdaptationParams::default();
        let map = map_at_origin();
        let goals = chasing_goal(Vec2::default(), Vec2::new(8.0, 0.0), &map, &[], &p).unwrap();
        assert_eq!(goals.len(), 1);
        assert!((goals[0].extent() - 2.0).abs() < 1e-9);
        let GoalConstraint::LineSet { start, end } = goals[0] else { panic!() };
        assert!((start.x - 4.0).abs() < 1e-9 && (end.x - 4.0).abs() < 1e-9);
        assert!(matches!(
            chasing_goal(Vec2::default(), Vec2::new(2.0, 0.0), &map, &[], &p),
            Err(AdaptationError::LeaderInsideMap)
        ));
    }

    #[test]
    fn chasing_line_split_by_hull() {
        let p = AdaptationParams::default();
        let map = map_at_origin();
        let hull = Polygon::rect(Vec2::new(3.7, -0.2), Vec2::new(4.2, 0.2));
        let goals = chasing_goal(Vec2::default(), Vec2::new(10.0, 0.0), &map, &[hull.clone()], &p).unwrap();
        assert_eq!(goals.len(), 2);
        let total = goal_line_length(10.0, 8.0, &p);
        // dense sampling oracle for the blocked length
        let n = 100_000;
        let blocked = (0..n)
            .filter(|k| {
                let y = -total / 2.0 + total * (*k as f64 + 0.5) / n as f64;
                hull.signed_distance(Vec2::new(4.0, y)) < p.margin
            })
            .count() as f64
            * total
            / n as f64;
        let union: f64 = goals.iter().map(|g| g.extent()).sum();
        assert!((union - (total - blocked)).abs() <= map.resolution, "{union} vs {}", total - blocked);
        for g in &goals {
            for q in g.sample(200) {
                assert!(hull.signed_distance(q) >= p.margin - 1e-6);
            }
        }
    }

    #[test]
    fn safe_distance_examples() {
        let p = AdaptationParams::default();
        assert_eq!(safe_distance(0.0, &p), 1.0);
        let p1 = AdaptationParams { alpha_nis: 1.0, ..p };
        assert_eq!(safe_distance(100.0, &p1), 3.0);
        let p2 = AdaptationParams { alpha_nis: 0.5, ..p };
        assert!((safe_distance(3.0, &p2) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn following_full_circle_in_free_space() {
        let goals = following_goal(Vec2::new(2.0, 0.0), 1.5, &[], Vec2::default(), &AdaptationParams::default()).unwrap();
        assert_eq!(goals.len(), 1);
        assert!(goals[0].is_full_circle());
    }

    #[test]
    fn far_semicircle_blocked_leaves_near_half() {
        let p = AdaptationParams::default();
        let leader = Vec2::new(3.0, 0.0);
        // wall over the far side, offset so that the clearance margin lands on the diameter
        let hull = Polygon::rect(Vec2::new(3.0 + p.margin, -3.0), Vec2::new(6.0, 3.0));
        let goals = following_goal(leader, 1.5, &[hull.clone()], Vec2::default(), &p).unwrap();
        assert_eq!(goals.len(), 1);
        let GoalConstraint::ArcSet { start_angle, span, .. } = goals[0] else { panic!() };
        // 1 degree sampling oracle
        let free = (0..360)
            .filter(|k| hull.signed_distance(leader + Vec2::from_angle(*k as f64 * PI / 180.0) * 1.5) >= p.margin)
            .count() as f64
            * PI
            / 180.0;
        assert!((span - free).abs() <= 2.0 * PI / 180.0);
        assert!((span - PI).abs() < 0.05);
        let mid = start_angle + span / 2.0;
        assert!(crate::geometry::angle_diff(mid, PI).abs() < 0.02);
    }

    #[test]
    fn enclosed_circle_has_no_free_arc() {
        let p = AdaptationParams::default();
        let hull = Polygon::rect(Vec2::new(-5.0, -5.0), Vec2::new(5.0, 5.0));
        assert_eq!(
            following_goal(Vec2::default(), 1.0, &[hull], Vec2::new(2.0, 0.0), &p),
            Err(AdaptationError::NoFreeArc)
        );
    }

    #[test]
    fn retreat_arc_centered_on_ray_to_robot() {
        let p = AdaptationParams::default();
        let leader = Vec2::new(1.0, 0.0);
        let goals = retreating_goal(leader, 2.0, &[], Vec2::default(), &p).unwrap();
        assert_eq!(goals[0].nearest_point(Vec2::default()).distance(Vec2::new(-1.0, 0.0)) < 1e-9, true);
    }

    #[test]
    fn retreat_excludes_wall_behind_robot() {
        let p = AdaptationParams::default();
        let leader = Vec2::new(1.0, 0.0);
        let wall = Polygon::rect(Vec2::new(-1.5, -3.0), Vec2::new(-0.6, 3.0));
        let goals = retreating_goal(leader, 2.0, &[wall.clone()], Vec2::default(), &p).unwrap();
        for g in &goals {
            for q in g.sample(400) {
                assert!(wall.signed_distance(q) >= p.margin - 1e-6);
                assert!((q.distance(leader) - 2.0).abs() < 1e-9);
            }
        }
        let first = goals[0].nearest_point(Vec2::default());
        let oracle = (0..360)
            .map(|k| leader + Vec2::from_angle(k as f64 * PI / 180.0) * 2.0)
            .filter(|q| wall.signed_distance(*q) >= p.margin)
            .map(|q| q.norm())
            .fold(f64::INFINITY, f64::min);
        assert!(first.norm() <= oracle + 1e-6);
    }

    #[test]
    fn speed_cap_examples() {
        let p = AdaptationParams::default();
        assert_eq!(speed_cap(Vec2::default(), Vec2::default(), Vec2::default(), &p, 1.5), 0.0);
        let p1 = AdaptationParams { alpha_1: 1.0, alpha_2: 0.5, ..p };
        assert_eq!(speed_cap(Vec2::new(1.0, 0.0), Vec2::new(4.0, 0.0), Vec2::default(), &p1, 1.5), 1.5);
        let p2 = AdaptationParams { alpha_1: 1.0, alpha_2: 0.2, ..p };
        let v = speed_cap(Vec2::new(0.0, 0.5), Vec2::new(0.0, 2.0), Vec2::default(), &p2, 1.5);
        assert!((v - 0.9).abs() < 1e-12);
        assert_eq!(state_speed_cap(FollowState::Chasing, Vec2::default(), Vec2::default(), Vec2::default(), &p, 1.5), 1.5);
    }

    #[test]
    fn planning_goal_passes_last_seen_through() {
        let p = AdaptationParams::default();
        let mut track = LeaderTrack::new(Vec2::new(5.0, 2.0), 0.1, 0.5);
        assert_eq!(planning_goal(&track, &p), Err(AdaptationError::NeverSeen));
        track.last_seen_pose = Some(Pose::new(5.0, 2.0, FRAC_PI_2));
        let g = planning_goal(&track, &p).unwrap();
        assert_eq!(
            g,
            GoalConstraint::PointPose {
                pose: Pose::new(5.0, 2.0, FRAC_PI_2),
                eps: 0.2
            }
        );
        assert_eq!(planning_goal(&track, &p).unwrap(), g);
    }

    fn embedding(v: f64) -> Embedding {
        Embedding {
            vector: vec![v, 1.0],
            confidence: 0.9,
            distance_at_capture: 2.5,
            timestamp: 0.0,
        }
    }

    #[test]
    fn switching_resets_buffers() {
        let mut memory = LeaderMemory::new(MemoryConfig::default());
        for k in 0..6 {
            memory.insert(Embedding {
                distance_at_capture: k as f64,
                ..embedding(k as f64)
            });
        }
        let far = flags(true, true, false, false);
        assert_eq!(switching_reset(&mut memory, embedding(9.0), &far), FollowState::Chasing);
        assert_eq!(memory.temporal.len(), 1);
        assert_eq!(memory.distance.occupied().count(), 1);
        let near = flags(true, true, true, false);
        assert_eq!(switching_reset(&mut memory, embedding(3.0), &near), FollowState::Following);
        assert_eq!(memory.temporal.entries()[0].vector, vec![3.0, 1.0]);
    }
}
