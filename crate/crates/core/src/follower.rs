//! Closed-loop leader following: one sense → identify → track → adapt → plan → execute
//! cycle per tick, and episode runs over a simulated world.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptation::{
    chasing_goal, following_goal, leader_approaching, planning_goal, retreating_goal, safe_distance, speed_cap,
    state_speed_cap, switching_reset, AdaptationParams, Flags, FollowState, StateMachine, TransitionEvent,
};
use crate::costmap::{build_costmap, cluster_groups, CostmapConfig, ObstacleGroup};
use crate::geometry::{angle_diff, normalize_angle, Polygon, Pose, Vec2};
use crate::graph::{build_graph, enumerate_generalized};
use crate::homotopy::{align_signature, dedup_by_signature, expand_detours, HomotopySignature, SeedParams};
use crate::perception::{
    isotropic_measurement_noise, kf_predict_update, record_last_seen, synthesize_embedding, white_accel_noise,
    AppearanceConfig, AppearanceModel, LeaderMemory, LeaderTrack, LightingField, MemoryConfig, HEADING_HOLD_SPEED,
};
use crate::sim::{Arena, ObservationHistory, Shape, Robot, RobotModel, Sensor, SensorFrame, SensorModel, Twist, World};
use crate::trajopt::{
    min_clearance, optimize, select, ConstraintSet, DynamicObstacle, GoalConstraint, OptimizerConfig,
    SimilarityForm, TrajOptError, Trajectory,
};

/// Follower configurations compared by the ablation suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Distance frame buffer, graph planner and goal-aware adaptation.
    Full,
    /// Re-identification from the temporal buffer only.
    #[serde(alias = "no-dfb")]
    NoDfb,
    /// One straight seed toward a standoff point; no graph, homotopy classes or goal sets.
    #[serde(alias = "no-graph", alias = "no_graph_planner")]
    NoGraph,
    /// Proportional pursuit controller with temporal-buffer matching.
    #[serde(alias = "baseline_pursuit")]
    Pursuit,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoDfb, Variant::NoGraph, Variant::Pursuit];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoDfb => "no_dfb",
            Variant::NoGraph => "no_graph",
            Variant::Pursuit => "pursuit",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "full" => Some(Variant::Full),
            "no_dfb" | "no-dfb" => Some(Variant::NoDfb),
            "no_graph" | "no-graph" | "no_graph_planner" => Some(Variant::NoGraph),
            "pursuit" | "baseline_pursuit" => Some(Variant::Pursuit),
            _ => None,
        }
    }

    pub fn uses_distance_buffer(self) -> bool {
        matches!(self, Variant::Full | Variant::NoGraph)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Pose spacing in time of planned trajectories (s).
    pub dt: f64,
    pub max_segments: usize,
    /// Replanning period (s).
    pub replan_period: f64,
    /// Obstacle nodes allowed on a generalized trajectory.
    pub depth_limit: usize,
    /// Generalized trajectories expanded per plan, shortest first.
    pub max_paths: usize,
    /// Seeds optimized per plan, shortest first.
    pub max_candidates: usize,
    pub detour_offset: f64,
    /// Hysteresis weight of the homotopy similarity factor.
    pub alpha_similarity: f64,
    pub similarity_form: SimilarityForm,
    /// Smallest speed cap handed to the optimizer (m/s).
    pub v_cap_floor: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            dt: 0.3,
            max_segments: 24,
            replan_period: 0.3,
            depth_limit: 2,
            max_paths: 6,
            max_candidates: 4,
            detour_offset: 0.2,
            alpha_similarity: 0.3,
            similarity_form: SimilarityForm::Agreement,
            v_cap_floor: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub initial_pos_sigma: f64,
    pub initial_vel_sigma: f64,
    /// White-noise acceleration spectral density (m²/s³).
    pub process_noise: f64,
    pub measurement_sigma: f64,
    /// Window of the finite-difference leader velocity (s).
    pub velocity_window: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            initial_pos_sigma: 0.3,
            initial_vel_sigma: 1.0,
            process_noise: 0.5,
            measurement_sigma: 0.1,
            velocity_window: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutorConfig {
    pub lookahead_min: f64,
    pub lookahead_time: f64,
    pub heading_gain: f64,
    /// Heading error above which the robot turns in place (rad).
    pub turn_in_place: f64,
    pub arrive_tolerance: f64,
    /// Pursuit baseline: standoff distance and speed gain.
    pub pursuit_standoff: f64,
    pub pursuit_gain: f64,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            lookahead_min: 0.25,
            lookahead_time: 0.3,
            heading_gain: 3.0,
            turn_in_place: 0.8,
            arrive_tolerance: 0.1,
            pursuit_standoff: 1.5,
            pursuit_gain: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct FollowerConfig {
    pub tick: Tick,
    pub robot: RobotModel,
    pub costmap: CostmapConfig,
    pub memory: MemoryConfig,
    pub appearance: AppearanceConfig,
    pub adaptation: AdaptationParams,
    pub optimizer: OptimizerConfig,
    pub planner: PlannerConfig,
    pub tracker: TrackerConfig,
    pub executor: ExecutorConfig,
    /// Keep per-plan geometry in the run record.
    pub record_plans: bool,
}

/// Control period (s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tick(pub f64);

impl Default for Tick {
    fn default() -> Self {
        Tick(0.1)
    }
}

/// Geometry behind one planning call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub goals: Vec<GoalConstraint>,
    pub hulls: Vec<Polygon>,
    /// One entry per deduplicated seed, after optimization.
    pub candidates: Vec<CandidateRecord>,
    /// Index into `candidates` of the trajectory sent to the executor.
    pub selected: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    /// Passed every hard check with its homotopy class intact.
    Feasible,
    /// Collision-free but short of the goal; used only when nothing is feasible.
    Fallback,
    /// Collides or changed class during optimization.
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub points: Vec<Vec2>,
    pub status: CandidateStatus,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub time: f64,
    pub robot: Pose,
    /// Ground-truth pose of the current leader.
    pub leader: Pose,
    pub target: usize,
    pub state: FollowState,
    pub signature: Option<Vec<i8>>,
    pub safe_distance: f64,
    pub v_cap: f64,
    pub visible: bool,
    pub in_fov: bool,
    pub visible_fraction: f64,
    pub identified: bool,
    pub match_score: Option<f64>,
    pub collision: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub script: usize,
    pub repeat: usize,
    pub seed: u64,
    pub variant: Variant,
    pub dt: f64,
    /// Time the last leader script ends; success is judged after the settle window.
    pub leader_end_time: f64,
    pub d_max: f64,
    pub arena: Arena,
    /// Obstacle shapes at the start of the episode.
    pub obstacles: Vec<Shape>,
    pub ticks: Vec<TickRecord>,
    pub transitions: Vec<TransitionEvent>,
    pub success: bool,
    pub collision: bool,
    pub loss_time: f64,
    /// ∫ distance dt over identified ticks.
    pub distance_integral: f64,
    pub identified_time: f64,
}

impl RunRecord {
    pub fn duration(&self) -> f64 {
        self.ticks.len() as f64 * self.dt
    }
}

/// Order to start following another leader.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchCommand {
    pub time: f64,
    pub new_leader: usize,
}

/// Everything needed to run one episode.
#[derive(Debug, Clone)]
pub struct EpisodeSetup {
    pub world: World,
    pub robot_start: Pose,
    pub target: usize,
    pub switch: Option<SwitchCommand>,
    pub lighting: LightingField,
    pub sensor: SensorModel,
    /// Extra time after the last script ends (s).
    pub settle_time: f64,
    pub seed: u64,
}

struct ActivePlan {
    points: Vec<Vec2>,
    final_heading: f64,
    allow_reverse: bool,
    v_cap: f64,
    progress: usize,
}

/// What the planner produced this tick.
struct PlanOutcome {
    trajectory: Option<Trajectory>,
    record: PlanRecord,
    centroids: Vec<Vec2>,
}

/// Per-episode follower state.
pub struct Follower {
    cfg: FollowerConfig,
    variant: Variant,
    sensor: Sensor,
    rng: ChaCha8Rng,
    appearance: Vec<AppearanceModel>,
    target: usize,
    memory: LeaderMemory,
    track: Option<LeaderTrack>,
    history: ObservationHistory,
    machine: StateMachine,
    identified: bool,
    plan: Option<ActivePlan>,
    last_plan_time: f64,
    last_plan_state: Option<FollowState>,
    previous_signature: Option<(HomotopySignature, Vec<Vec2>)>,
    pending_switch: Option<SwitchCommand>,
}

/// Inputs of the adaptation step, derived from perception.
struct LeaderEstimate {
    position: Vec2,
    velocity: Vec2,
}

impl Follower {
    pub fn new(setup: &EpisodeSetup, cfg: &FollowerConfig, variant: Variant) -> Self {
        let memory_cfg = MemoryConfig {
            use_distance_buffer: cfg.memory.use_distance_buffer && variant.uses_distance_buffer(),
            ..cfg.memory
        };
        let appearance = setup
            .world
            .leaders
            .iter()
            .map(|l| AppearanceModel::new(l.appearance_seed, setup.lighting.clone(), cfg.appearance, setup.sensor.range))
            .collect();
        Self {
            cfg: cfg.clone(),
            variant,
            sensor: Sensor::new(setup.sensor, setup.seed.wrapping_mul(31).wrapping_add(7)),
            rng: ChaCha8Rng::seed_from_u64(setup.seed.wrapping_mul(131).wrapping_add(3)),
            appearance,
            target: setup.target,
            memory: LeaderMemory::new(memory_cfg),
            track: None,
            history: ObservationHistory::new(2.0),
            machine: StateMachine::new(FollowState::Planning),
            identified: false,
            plan: None,
            last_plan_time: f64::NEG_INFINITY,
            last_plan_state: None,
            previous_signature: None,
            pending_switch: setup.switch,
        }
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn transitions(&self) -> &[TransitionEvent] {
        &self.machine.events
    }

    /// One control cycle at `world.time`; returns the command and the tick record.
    pub fn tick(&mut self, world: &World, robot: &Robot) -> (Twist, TickRecord) {
        let t = world.time;
        let dt = self.cfg.tick.0;
        let pose = robot.pose;
        let mut new_leader_command = false;
        if let Some(sw) = self.pending_switch {
            if t + 1e-9 >= sw.time {
                self.pending_switch = None;
                self.target = sw.new_leader;
                new_leader_command = true;
            }
        }

        let frame = self.sensor.sense(world, &pose, self.target);
        let obs = &frame.observation;
        let mut match_score = None;
        let mut identified = false;
        let mut embedding = None;
        if obs.visible {
            if let Ok(e) = synthesize_embedding(&self.appearance[self.target], obs, &pose, t, &mut self.rng) {
                if new_leader_command || self.identified || self.memory.temporal.is_empty() {
                    identified = true;
                } else if let Ok((ok, score)) = self.memory.matches(&e) {
                    identified = ok;
                    match_score = Some(score);
                }
                embedding = Some(e);
            }
        }
        if new_leader_command {
            self.track = None;
            self.history.clear();
            self.plan = None;
            self.previous_signature = None;
            match embedding.clone() {
                Some(e) => {
                    // next state is re-derived by the machine on the following tick
                    let _ = switching_reset(&mut self.memory, e, &Flags::default());
                }
                None => {
                    self.memory.temporal.clear();
                    self.memory.distance.clear();
                }
            }
        } else if identified {
            if let Some(e) = embedding {
                self.memory.insert(e);
            }
        }
        self.identified = identified;

        let mean = if identified { obs.mean_point() } else { None };
        self.update_track(t, dt, mean);
        self.history.push_mean(t, mean);
        let estimate = self.estimate();
        let nis = self.track.as_ref().map_or(0.0, |tr| tr.nis);
        let d_t = safe_distance(nis, &self.cfg.adaptation);

        let half = self.cfg.costmap.width / 2.0;
        let flags = match &estimate {
            Some(est) => {
                let rel = est.position - pose.position();
                Flags {
                    in_fov: obs.in_fov,
                    identified,
                    in_costmap: rel.x.abs() <= half && rel.y.abs() <= half,
                    distance: rel.norm(),
                    leader_approaching: leader_approaching(
                        pose.position(),
                        est.position,
                        est.velocity,
                        d_t,
                        &self.cfg.adaptation,
                    ),
                    new_leader_command,
                }
            }
            None => Flags {
                in_fov: obs.in_fov,
                identified,
                new_leader_command,
                ..Flags::default()
            },
        };
        let state = self.machine.update(t, &flags, &self.cfg.adaptation);

        let v_max = self.cfg.robot.v_max_physical;
        let v_cap = match (&estimate, self.variant) {
            (Some(est), Variant::NoGraph) => speed_cap(est.velocity, est.position, pose.position(), &self.cfg.adaptation, v_max),
            (Some(est), _) => state_speed_cap(state, est.velocity, est.position, pose.position(), &self.cfg.adaptation, v_max),
            (None, _) => v_max,
        };

        let mut plan_record = None;
        let cmd = match self.variant {
            Variant::Pursuit => self.pursuit(&pose, estimate.as_ref().filter(|_| identified)),
            _ => {
                if state == FollowState::Switching {
                    self.plan = None;
                    Twist::default()
                } else {
                    let due = self.plan.is_none()
                        || self.last_plan_state != Some(state)
                        || t - self.last_plan_time + 1e-9 >= self.cfg.planner.replan_period;
                    if due {
                        let outcome = self.replan(state, &pose, &frame, estimate.as_ref(), d_t, v_cap);
                        self.last_plan_time = t;
                        self.last_plan_state = Some(state);
                        if let Some(o) = outcome {
                            if self.cfg.record_plans {
                                plan_record = Some(o.record.clone());
                            }
                            self.adopt(o, state, estimate.as_ref(), v_cap);
                        }
                    }
                    let planned = self.execute(&pose, state, estimate.as_ref());
                    self.dodge(&pose, &frame).unwrap_or(planned)
                }
            }
        };

        let target_pose = world.leader_pose(self.target);
        let record = TickRecord {
            time: t,
            robot: pose,
            leader: target_pose,
            target: self.target,
            state,
            signature: self.previous_signature.as_ref().map(|(s, _)| s.values.clone()),
            safe_distance: d_t,
            v_cap,
            visible: obs.visible,
            in_fov: obs.in_fov,
            visible_fraction: obs.visible_fraction,
            identified,
            match_score,
            collision: false,
            plan: plan_record,
        };
        (cmd, record)
    }

    fn update_track(&mut self, t: f64, dt: f64, mean: Option<Vec2>) {
        let tc = self.cfg.tracker;
        match (&self.track, mean) {
            (None, Some(m)) => {
                let tr = LeaderTrack::new(m, tc.initial_pos_sigma, tc.initial_vel_sigma);
                self.track = Some(record_last_seen(&tr, m, Vec2::ZERO, t));
            }
            (None, None) => {}
            (Some(tr), _) => {
                let q = white_accel_noise(dt, tc.process_noise);
                let r = isotropic_measurement_noise(tc.measurement_sigma);
                let mut next = kf_predict_update(tr, mean, dt, &q, &r).unwrap_or_else(|_| tr.clone());
                if let Some(m) = mean {
                    next = record_last_seen(&next, m, next.velocity(), t);
                }
                self.track = Some(next);
            }
        }
    }

    fn estimate(&self) -> Option<LeaderEstimate> {
        let track = self.track.as_ref()?;
        if self.identified {
            if let Ok((p, v)) = self.history.mean_state(self.cfg.tracker.velocity_window) {
                return Some(LeaderEstimate {
                    position: p,
                    velocity: v,
                });
            }
        }
        Some(LeaderEstimate {
            position: track.position(),
            velocity: track.velocity(),
        })
    }

    fn goals_for(
        &self,
        state: FollowState,
        pose: &Pose,
        map: &crate::costmap::Costmap,
        hulls: &[Polygon],
        estimate: Option<&LeaderEstimate>,
        d_t: f64,
    ) -> Vec<GoalConstraint> {
        let params = &self.cfg.adaptation;
        let r = pose.position();
        let eps = params.epsilon;
        let Some(est) = estimate else {
            return Vec::new();
        };
        if self.variant == Variant::NoGraph {
            let (target, ok) = match state {
                FollowState::Planning => match self.track.as_ref().and_then(|t| t.last_seen_pose) {
                    Some(p) => (p.position(), true),
                    None => (r, false),
                },
                _ => {
                    let away = (r - est.position).normalized();
                    (est.position + away * d_t, true)
                }
            };
            return if ok {
                vec![GoalConstraint::Point { position: target, eps }]
            } else {
                Vec::new()
            };
        }
        let result = match state {
            FollowState::Chasing => chasing_goal(r, est.position, map, hulls, params).or_else(|_| {
                Ok(vec![GoalConstraint::Point {
                    position: map.edge_point_towards(est.position),
                    eps,
                }])
            }),
            FollowState::Following => following_goal(est.position, d_t, hulls, r, params),
            FollowState::Retreating => {
                // extrapolate the approach, but never past the robot
                let shift = est.velocity * RETREAT_PREDICTION;
                let room = (r.distance(est.position) - 2.0 * LEADER_RADIUS - 0.2).max(0.0);
                let ahead = est.position + shift * (room / shift.norm().max(room).max(1e-9));
                retreating_goal(ahead, d_t, hulls, r, params).map(|mut g| {
                    g.truncate(1);
                    g
                })
            }
            FollowState::Planning => self
                .track
                .as_ref()
                .ok_or(crate::adaptation::AdaptationError::NeverSeen)
                .and_then(|t| {
                    let goal = planning_goal(t, params)?;
                    let still = Vec2::new(t.state[2], t.state[3]).norm() < HEADING_HOLD_SPEED;
                    Ok(match goal {
                        // a standing leader is still there: stop short of it and look at it
                        GoalConstraint::PointPose { pose: last, eps } if still => {
                            let p = last.position();
                            let d = r.distance(p);
                            let stand = if d > d_t { p + (r - p) * (d_t / d) } else { r };
                            GoalConstraint::PointPose {
                                pose: Pose::from_parts(stand, (p - stand).angle()),
                                eps,
                            }
                        }
                        g => g,
                    })
                })
                .map(|g| vec![g]),
            FollowState::Switching => Ok(Vec::new()),
        };
        result.unwrap_or_default()
    }

    fn replan(
        &mut self,
        state: FollowState,
        pose: &Pose,
        frame: &SensorFrame,
        estimate: Option<&LeaderEstimate>,
        d_t: f64,
        v_cap: f64,
    ) -> Option<PlanOutcome> {
        let leader_local: Vec<Vec2> = frame
            .observation
            .point_set
            .iter()
            .map(|&p| pose.inverse_transform_point(p))
            .collect();
        let map = build_costmap(&frame.scan, &leader_local, pose, &self.cfg.costmap);
        let groups = cluster_groups(&map);
        let hulls: Vec<Polygon> = groups.iter().map(|g| g.boundary.clone()).collect();
        let goals = self.goals_for(state, pose, &map, &hulls, estimate, d_t);
        if goals.is_empty() {
            return None;
        }
        let robot_radius = self.cfg.robot.footprint_radius;
        let mut dynamic: Vec<DynamicObstacle> = frame
            .tracked
            .iter()
            .map(|o| DynamicObstacle {
                position: o.position,
                velocity: o.velocity,
                radius: o.radius + robot_radius + DYNAMIC_PAD,
            })
            .collect();
        let threatened = dynamic.iter().any(|o| {
            (0..=20).any(|k| {
                let t = k as f64 * 0.1;
                (o.position + o.velocity * t).distance(pose.position()) < o.radius + THREAT_MARGIN
            })
        });
        // already there and nothing approaching: hold position, let the executor turn toward the leader
        if !threatened && goals.iter().any(|g| g.nearest_point(pose.position()).distance(pose.position()) <= ARRIVED) {
            return Some(PlanOutcome {
                trajectory: None,
                record: PlanRecord {
                    goals,
                    hulls,
                    candidates: Vec::new(),
                    selected: None,
                },
                centroids: groups.iter().map(|g| g.centroid).collect(),
            });
        }

        let v_cap = v_cap.max(self.cfg.planner.v_cap_floor);
        if let (Some(est), true) = (estimate, self.identified) {
            dynamic.push(DynamicObstacle {
                position: est.position,
                velocity: est.velocity,
                radius: LEADER_RADIUS + LEADER_SURFACE_OFFSET + robot_radius + DYNAMIC_PAD,
            });
        }
        let make_cs = |goal: &GoalConstraint| {
            let mut cs = ConstraintSet::new(goal.clone(), v_cap);
            cs.static_groups = hulls.clone();
            cs.dynamic_obstacles = dynamic.clone();
            cs.a_max = self.cfg.robot.a_max;
            cs.omega_max = self.cfg.robot.omega_max;
            cs.initial_speed = 0.0;
            cs.allow_reverse = state == FollowState::Retreating;
            cs
        };
        let pc = self.cfg.planner;
        let seed_params = SeedParams {
            start: *pose,
            v_cap,
            dt: pc.dt,
            max_segments: pc.max_segments,
            offset: pc.detour_offset,
        };

        let seeds: Vec<(Trajectory, usize)> = if self.variant == Variant::NoGraph {
            let target = goals[0].nearest_point(pose.position());
            let t = Trajectory::from_polyline(*pose, &[target], v_cap, pc.dt, pc.max_segments, None);
            vec![(t, 0)]
        } else {
            self.graph_seeds(&groups, pose, &goals, &seed_params)
        };

        let opt_cfg = self.cfg.optimizer;
        let results: Vec<(Trajectory, CandidateStatus)> = seeds
            .par_iter()
            .map(|(seed, gi)| {
                let cs = make_cs(&goals[*gi]);
                let keep_class = |t: &Trajectory| self.variant == Variant::NoGraph || t.signature == seed.signature;
                match optimize(seed, &cs, &opt_cfg) {
                    Ok(t) if keep_class(&t) => (t, CandidateStatus::Feasible),
                    // reaching short of the goal is still safe to drive
                    Err(TrajOptError::Infeasible { trajectory, .. })
                        if keep_class(&trajectory) && min_clearance(&trajectory, &cs) >= 0.0 =>
                    {
                        (*trajectory, CandidateStatus::Fallback)
                    }
                    Ok(t) => (t, CandidateStatus::Rejected),
                    Err(TrajOptError::Infeasible { trajectory, .. }) => (*trajectory, CandidateStatus::Rejected),
                    Err(_) => (seed.clone(), CandidateStatus::Rejected),
                }
            })
            .collect();

        let centroids: Vec<Vec2> = groups.iter().map(|g| g.centroid).collect();
        let any_feasible = results.iter().any(|(_, s)| *s == CandidateStatus::Feasible);
        let pool: Vec<usize> = (0..results.len())
            .filter(|&i| match results[i].1 {
                CandidateStatus::Feasible => true,
                CandidateStatus::Fallback => !any_feasible,
                CandidateStatus::Rejected => false,
            })
            .collect();
        let selected = if pool.is_empty() {
            None
        } else {
            let aligned = self
                .previous_signature
                .as_ref()
                .map(|(sig, cents)| align_signature(sig, cents, &centroids, self.cfg.costmap.resolution));
            let trajs: Vec<Trajectory> = pool.iter().map(|&i| results[i].0.clone()).collect();
            Some(pool[select(&trajs, aligned.as_deref(), pc.alpha_similarity, pc.similarity_form)])
        };
        Some(PlanOutcome {
            trajectory: selected.map(|i| results[i].0.clone()),
            record: PlanRecord {
                goals,
                hulls,
                candidates: results
                    .iter()
                    .map(|(t, status)| CandidateRecord {
                        points: t.positions(),
                        status: *status,
                        cost: t.cost,
                    })
                    .collect(),
                selected,
            },
            centroids,
        })
    }

    fn graph_seeds(
        &self,
        groups: &[ObstacleGroup],
        pose: &Pose,
        goals: &[GoalConstraint],
        params: &SeedParams,
    ) -> Vec<(Trajectory, usize)> {
        let graph = build_graph(groups, pose, goals);
        let Ok(mut paths) = enumerate_generalized(&graph, self.cfg.planner.depth_limit) else {
            return Vec::new();
        };
        paths.sort_by(|a, b| a.graph_length.total_cmp(&b.graph_length));
        paths.truncate(self.cfg.planner.max_paths);
        let mut tagged: Vec<(Trajectory, usize)> = Vec::new();
        for gt in &paths {
            let crate::graph::NodeKind::Goal(gi) = graph.nodes[gt.goal_node()].kind else {
                continue;
            };
            for s in expand_detours(gt, &graph, groups, goals, params) {
                tagged.push((s, gi));
            }
        }
        // dedup by class, keeping the goal index of the retained seed
        let trajs: Vec<Trajectory> = tagged.iter().map(|(t, _)| t.clone()).collect();
        let mut kept: Vec<(Trajectory, usize)> = dedup_by_signature(trajs)
            .into_iter()
            .map(|t| {
                let gi = tagged
                    .iter()
                    .find(|(s, _)| s.signature == t.signature && s.poses == t.poses)
                    .map_or(0, |(_, g)| *g);
                (t, gi)
            })
            .collect();
        kept.sort_by(|a, b| a.0.length().total_cmp(&b.0.length()));
        kept.truncate(self.cfg.planner.max_candidates);
        kept
    }

    fn adopt(&mut self, outcome: PlanOutcome, state: FollowState, estimate: Option<&LeaderEstimate>, v_cap: f64) {
        match outcome.trajectory {
            Some(t) => {
                self.previous_signature = Some((t.signature.clone(), outcome.centroids));
                let end = t.end();
                let final_heading = match (state, estimate) {
                    (FollowState::Planning, _) | (_, None) => end.theta,
                    (_, Some(est)) => (est.position - end.position()).angle(),
                };
                self.plan = Some(ActivePlan {
                    points: t.positions(),
                    final_heading,
                    allow_reverse: state == FollowState::Retreating,
                    v_cap: v_cap.max(self.cfg.planner.v_cap_floor),
                    progress: 0,
                });
            }
            None => {
                // hold position; the executor faces the leader or the planning goal heading
                let final_heading = match outcome.record.goals.first() {
                    Some(GoalConstraint::PointPose { pose, .. }) => pose.theta,
                    _ => f64::NAN,
                };
                self.plan = Some(ActivePlan {
                    points: Vec::new(),
                    final_heading,
                    allow_reverse: false,
                    v_cap: 0.0,
                    progress: 0,
                });
            }
        }
    }

    /// Pure pursuit along the active plan, then turn to the final heading.
    fn execute(&mut self, pose: &Pose, state: FollowState, estimate: Option<&LeaderEstimate>) -> Twist {
        let ec = self.cfg.executor;
        let model = self.cfg.robot;
        let face_leader = |fallback: f64| match (state, estimate) {
            (FollowState::Planning, _) | (_, None) => fallback,
            (_, Some(est)) => (est.position - pose.position()).angle(),
        };
        let turn_to = |heading: f64| {
            if heading.is_nan() {
                return Twist::default();
            }
            let e = angle_diff(heading, pose.theta);
            Twist {
                v: 0.0,
                omega: (ec.heading_gain * e).clamp(-model.omega_max, model.omega_max),
            }
        };
        // nothing to track while retreating: back straight away, facing the leader
        let back_away = |est: &LeaderEstimate| {
            let e = angle_diff((est.position - pose.position()).angle(), pose.theta);
            let speed = (est.velocity.norm() + 0.3).min(model.v_max_physical);
            Twist {
                v: -speed * e.cos().max(0.0),
                omega: (ec.heading_gain * e).clamp(-model.omega_max, model.omega_max),
            }
        };
        let Some(plan) = self.plan.as_mut() else {
            return match estimate {
                Some(est) if state == FollowState::Retreating => back_away(est),
                Some(est) if state != FollowState::Planning => turn_to((est.position - pose.position()).angle()),
                _ => Twist::default(),
            };
        };
        let pts = &plan.points;
        if pts.len() < 2 {
            return match estimate {
                Some(est) if state == FollowState::Retreating => back_away(est),
                _ => turn_to(face_leader(plan.final_heading)),
            };
        }
        let p = pose.position();
        // advance the progress index to the nearest segment ahead
        let mut best = (plan.progress, f64::INFINITY, 0.0);
        for i in plan.progress..pts.len() - 1 {
            let (q, s) = crate::geometry::closest_point_on_segment(p, pts[i], pts[i + 1]);
            let d = q.distance(p);
            if d < best.1 - 1e-9 {
                best = (i, d, s);
            }
        }
        plan.progress = best.0;
        let (seg, _, s) = best;
        let seg_len = pts[seg].distance(pts[seg + 1]);
        let mut remaining = (1.0 - s) * seg_len;
        for w in pts[seg + 1..].windows(2) {
            remaining += w[0].distance(w[1]);
        }
        let end = *pts.last().unwrap();
        if remaining < ec.arrive_tolerance && p.distance(end) < 2.0 * ec.arrive_tolerance {
            let h = face_leader(plan.final_heading);
            return turn_to(h);
        }
        let lookahead = (ec.lookahead_min + ec.lookahead_time * plan.v_cap).min(remaining.max(ec.arrive_tolerance));
        let mut target = end;
        let mut acc = -(s * seg_len);
        for i in seg..pts.len() - 1 {
            let l = pts[i].distance(pts[i + 1]);
            if acc + l >= lookahead {
                let u = ((lookahead - acc) / l.max(1e-12)).clamp(0.0, 1.0);
                target = pts[i].lerp(pts[i + 1], u);
                break;
            }
            acc += l;
        }
        let dir = target - p;
        let desired = if dir.norm() > 1e-9 { dir.angle() } else { pose.theta };
        let reverse = plan.allow_reverse && angle_diff(desired, pose.theta).abs() > PI / 2.0;
        let e = if reverse {
            angle_diff(normalize_angle(desired + PI), pose.theta)
        } else {
            angle_diff(desired, pose.theta)
        };
        let brake = (2.0 * 0.8 * model.a_max * remaining).sqrt();
        let mut speed = plan.v_cap.min(brake).min(model.v_max_physical);
        // slow down ahead of bends that would need a turn in place
        let travel = if reverse { normalize_angle(pose.theta + PI) } else { pose.theta };
        let mut dist = (1.0 - s) * seg_len;
        for i in seg + 1..pts.len() - 1 {
            if dist > CORNER_LOOKAHEAD {
                break;
            }
            let l = pts[i].distance(pts[i + 1]);
            if l > 1e-6 && angle_diff((pts[i + 1] - pts[i]).angle(), travel).abs() > CORNER_TURN {
                speed = speed.min((CORNER_SPEED * CORNER_SPEED + 2.0 * 0.8 * model.a_max * dist).sqrt());
                break;
            }
            dist += l;
        }
        if e.abs() > ec.turn_in_place {
            speed = 0.0;
        } else {
            speed *= e.cos();
        }
        Twist {
            v: if reverse { -speed } else { speed },
            omega: (ec.heading_gain * e).clamp(-model.omega_max, model.omega_max),
        }
    }

    /// Sidestep a moving obstacle predicted to reach the robot, toward the side free in the scan.
    fn dodge(&self, pose: &Pose, frame: &SensorFrame) -> Option<Twist> {
        let model = self.cfg.robot;
        let ec = self.cfg.executor;
        let p = pose.position();
        let reach = model.footprint_radius + DODGE_MARGIN;
        let (threat, _) = frame
            .tracked
            .iter()
            .filter_map(|o| {
                // time of closest approach over the horizon, robot assumed still
                let rel = o.position - p;
                let vv = o.velocity.norm_squared();
                let tca = if vv > 1e-9 { (-rel.dot(o.velocity) / vv).clamp(0.0, DODGE_HORIZON) } else { 0.0 };
                let closest = rel + o.velocity * tca;
                (closest.norm() < o.radius + reach).then_some((o, tca))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        let side = if threat.velocity.norm() > 1e-6 {
            threat.velocity.normalized().perp()
        } else {
            (p - threat.position).normalized().perp()
        };
        let clear = |dir: Vec2| {
            let end = p + dir * DODGE_STEP;
            let far = |w: Vec2| crate::geometry::point_segment_distance(w, p, end) > reach;
            frame.scan.iter().all(|&s| far(pose.transform_point(s))) && frame.observation.point_set.iter().all(|&w| far(w))
        };
        // worst predicted gap to any tracked obstacle when moving along `dir`
        let gap = |dir: Vec2| {
            let mut worst = f64::INFINITY;
            for k in 0..=15 {
                let t = k as f64 * DODGE_HORIZON / 15.0;
                let me = p + dir * (DODGE_SPEED * t);
                for o in &frame.tracked {
                    worst = worst.min((o.position + o.velocity * t).distance(me) - o.radius);
                }
            }
            worst
        };
        let away = (p - threat.position).normalized();
        let mut best = (Vec2::ZERO, gap(Vec2::ZERO));
        for d in [side, -side, away, (side + away).normalized(), (away - side).normalized()] {
            if d.norm() > 0.5 && clear(d) {
                let g = gap(d);
                if g > best.1 + 1e-6 {
                    best = (d, g);
                }
            }
        }
        let dir = best.0;
        if dir == Vec2::ZERO {
            return Some(Twist::default());
        }
        let forward = angle_diff(dir.angle(), pose.theta);
        let (e, sign) = if forward.abs() <= PI / 2.0 {
            (forward, 1.0)
        } else {
            (angle_diff(normalize_angle(dir.angle() + PI), pose.theta), -1.0)
        };
        let speed = if e.abs() > ec.turn_in_place { 0.0 } else { model.v_max_physical * e.cos() };
        Some(Twist {
            v: sign * speed,
            omega: (ec.heading_gain * e).clamp(-model.omega_max, model.omega_max),
        })
    }

    fn pursuit(&self, pose: &Pose, estimate: Option<&LeaderEstimate>) -> Twist {
        let Some(est) = estimate else {
            return Twist::default();
        };
        let ec = self.cfg.executor;
        let model = self.cfg.robot;
        let rel = est.position - pose.position();
        let e = angle_diff(rel.angle(), pose.theta);
        let v = (ec.pursuit_gain * (rel.norm() - ec.pursuit_standoff)).clamp(0.0, model.v_max_physical) * e.cos().max(0.0);
        Twist {
            v,
            omega: (ec.heading_gain * e).clamp(-model.omega_max, model.omega_max),
        }
    }
}

/// Radius assumed for the leader body when planning around it (m).
const LEADER_RADIUS: f64 = 0.3;

/// The leader estimate is the mean of its visible outline, this far in front of its center (m).
const LEADER_SURFACE_OFFSET: f64 = 0.2;

/// Clearance added to every moving obstacle in planning (m).
const DYNAMIC_PAD: f64 = 0.1;

/// Distance to a goal set at which no new trajectory is planned (m).
const ARRIVED: f64 = 0.15;

/// Prediction window and clearance of the reactive sidestep.
const DODGE_HORIZON: f64 = 1.5;
const DODGE_MARGIN: f64 = 0.15;
const DODGE_STEP: f64 = 0.6;
const DODGE_SPEED: f64 = 0.8;

/// Bends sharper than this, within the lookahead distance, cap the approach speed (rad, m, m/s).
const CORNER_TURN: f64 = 0.6;
const CORNER_LOOKAHEAD: f64 = 2.0;
const CORNER_SPEED: f64 = 0.3;

/// Horizon over which the approaching leader is extrapolated for the retreat goal (s).
const RETREAT_PREDICTION: f64 = 1.0;

/// Extra distance at which a moving obstacle forces a replan while holding position (m).
const THREAT_MARGIN: f64 = 0.3;

/// Runs one episode to the end of the last script plus the settle window.
pub fn run_episode(setup: &EpisodeSetup, cfg: &FollowerConfig, variant: Variant) -> RunRecord {
    let dt = cfg.tick.0;
    let mut world = setup.world.clone();
    let mut robot = Robot::new(setup.robot_start);
    let mut follower = Follower::new(setup, cfg, variant);
    let leader_end_time = world.leaders.iter().map(|l| l.end_time()).fold(0.0, f64::max);
    let end = leader_end_time + setup.settle_time;
    let steps = (end / dt).round() as usize + 1;
    let footprint = cfg.robot.footprint_radius;
    let mut ticks = Vec::with_capacity(steps);
    let mut collision = false;
    let mut loss_time = 0.0;
    let mut distance_integral = 0.0;
    let mut identified_time = 0.0;
    for _ in 0..steps {
        let (cmd, mut rec) = follower.tick(&world, &robot);
        let before = robot;
        robot.apply(cmd, &cfg.robot, dt);
        let mut hit = false;
        if world.follower_collides(robot.pose.position(), footprint).is_some() {
            // blocked: keep the turn, cancel the translation
            hit = true;
            robot.pose = Pose::from_parts(before.pose.position(), robot.pose.theta);
            robot.twist.v = 0.0;
        }
        world.step(dt);
        let target = follower.target();
        let leader = world.leader_pose(target).position();
        if world.follower_collides(robot.pose.position(), footprint).is_some()
            || robot.pose.position().distance(leader) < footprint + world.leaders[target].radius
        {
            hit = true;
        }
        rec.collision = hit;
        collision |= hit;
        if rec.identified {
            identified_time += dt;
            distance_integral += dt * rec.robot.position().distance(rec.leader.position());
        } else {
            loss_time += dt;
        }
        ticks.push(rec);
    }
    let success = ticks.last().is_some_and(|last| {
        last.identified && last.robot.position().distance(last.leader.position()) <= cfg.adaptation.d_max
    });
    RunRecord {
        scenario: String::new(),
        script: 0,
        repeat: 0,
        seed: setup.seed,
        variant,
        dt,
        leader_end_time,
        d_max: cfg.adaptation.d_max,
        arena: setup.world.arena,
        obstacles: setup.world.obstacles.iter().map(|o| o.shape.clone()).collect(),
        ticks,
        transitions: follower.transitions().to_vec(),
        success,
        collision,
        loss_time,
        distance_integral,
        identified_time,
    }
}
