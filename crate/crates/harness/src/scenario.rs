//! Scenario files and the builtin desk-scale suite.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use follow_core::follower::{EpisodeSetup, FollowerConfig, SwitchCommand, Variant};
use follow_core::geometry::point_segment_distance;
use follow_core::perception::{LightRegion, LightingField};
use follow_core::sim::{Arena, LeaderScript, ObstacleConfig, SensorModel, Shape, Waypoint, World};
use follow_core::{Pose, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown scenario `{0}`")]
    Unknown(String),
}

/// One leader script together with the robot start and optional leader switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptConfig {
    pub robot_start: Pose,
    pub leaders: Vec<LeaderScript>,
    /// Index of the leader followed first.
    #[serde(default)]
    pub target: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch: Option<SwitchCommand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    /// Base seed; episode seeds derive from it unless `seeds` lists them per repeat.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_settle")]
    pub settle_time: f64,
    pub arena: Arena,
    #[serde(default)]
    pub sensor: SensorModel,
    #[serde(default)]
    pub lighting: LightingField,
    #[serde(default)]
    pub follower: FollowerConfig,
    #[serde(default)]
    pub obstacles: Vec<ObstacleConfig>,
    pub scripts: Vec<ScriptConfig>,
}

fn default_repeats() -> usize {
    4
}

fn default_variant() -> Variant {
    Variant::Full
}

fn default_settle() -> f64 {
    5.0
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// Reads a scenario file, or a builtin when `source` names one and no such file exists.
    pub fn load(source: &str) -> Result<Self, ConfigError> {
        let path = Path::new(source);
        if !path.exists() {
            if let Some(cfg) = builtin(source) {
                return Ok(cfg);
            }
        }
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: source.to_string(),
            source: e,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.repeats == 0 {
            return invalid("repeats must be at least 1".into());
        }
        if self.scripts.is_empty() {
            return invalid("a scenario needs at least one script".into());
        }
        if self.settle_time < 0.0 {
            return invalid("settle_time must be non-negative".into());
        }
        self.sensor.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.follower
            .robot
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.follower
            .adaptation
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.follower.tick.0 <= 0.0 {
            return invalid("tick must be positive".into());
        }
        for (i, s) in self.scripts.iter().enumerate() {
            if s.leaders.is_empty() {
                return invalid(format!("script {i} has no leader"));
            }
            if s.target >= s.leaders.len() {
                return invalid(format!("script {i}: target {} out of range", s.target));
            }
            if let Some(sw) = s.switch {
                if sw.new_leader >= s.leaders.len() || sw.time < 0.0 {
                    return invalid(format!("script {i}: bad switch command"));
                }
            }
            for l in &s.leaders {
                l.validate().map_err(|e| ConfigError::Invalid(format!("script {i}: {e}")))?;
            }
        }
        World::new(self.arena, &self.obstacles, Vec::new(), 0).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Seed of one episode; identical across variants.
    pub fn episode_seed(&self, script: usize, repeat: usize) -> u64 {
        let base = if self.seeds.is_empty() {
            self.seed.wrapping_mul(1_000_003).wrapping_add(repeat as u64)
        } else {
            self.seeds[repeat % self.seeds.len()]
        };
        base.wrapping_mul(0x9E37_79B9).wrapping_add(script as u64 * 7919 + 1)
    }

    pub fn episode(&self, script: usize, repeat: usize) -> Result<EpisodeSetup, ConfigError> {
        let s = self
            .scripts
            .get(script)
            .ok_or_else(|| ConfigError::Invalid(format!("no script {script}")))?;
        let seed = self.episode_seed(script, repeat);
        let world = World::new(self.arena, &self.obstacles, s.leaders.clone(), seed)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(EpisodeSetup {
            world,
            robot_start: s.robot_start,
            target: s.target,
            switch: s.switch,
            lighting: self.lighting.clone(),
            sensor: self.sensor,
            settle_time: self.settle_time,
            seed,
        })
    }

    pub fn episode_count(&self) -> usize {
        self.scripts.len() * self.repeats
    }
}

pub const BUILTIN_NAMES: [&str; 5] = ["playground", "forest", "factory", "dynamic", "reappearance"];

/// The four scenarios of the comparison suite.
pub const SUITE: [&str; 4] = ["playground", "forest", "factory", "dynamic"];

pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    match name {
        "playground" => Some(playground()),
        "forest" => Some(forest()),
        "factory" => Some(factory()),
        "dynamic" => Some(dynamic()),
        "reappearance" => Some(reappearance()),
        _ => None,
    }
}

fn v(x: f64, y: f64) -> Vec2 {
    Vec2::new(x, y)
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> ObstacleConfig {
    ObstacleConfig::fixed(Shape::polygon(vec![v(x0, y0), v(x1, y0), v(x1, y1), v(x0, y1)]))
}

/// Timed waypoints along a polyline at constant speed, after an initial pause.
fn walk(points: &[Vec2], speed: f64, pause: f64, hold: f64) -> Vec<Waypoint> {
    let heading = |i: usize| {
        let d = if i + 1 < points.len() {
            points[i + 1] - points[i]
        } else {
            points[i] - points[i - 1]
        };
        d.angle()
    };
    let mut t = 0.0;
    let mut out = vec![Waypoint {
        time: t,
        pose: Pose::from_parts(points[0], heading(0)),
    }];
    if pause > 0.0 {
        t += pause;
        out.push(Waypoint {
            time: t,
            pose: Pose::from_parts(points[0], heading(0)),
        });
    }
    for i in 1..points.len() {
        t += points[i - 1].distance(points[i]) / speed;
        out.push(Waypoint {
            time: t,
            pose: Pose::from_parts(points[i], heading(i)),
        });
    }
    if hold > 0.0 {
        let last = out.last().unwrap().pose;
        out.push(Waypoint {
            time: t + hold,
            pose: last,
        });
    }
    out
}

fn leader(identity: &str, seed: u64, waypoints: Vec<Waypoint>) -> LeaderScript {
    LeaderScript::new(identity, seed, waypoints)
}

fn base(name: &str, arena: Arena) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        repeats: 4,
        variant: Variant::Full,
        seed: 17,
        seeds: Vec::new(),
        settle_time: 5.0,
        arena,
        sensor: SensorModel::default(),
        lighting: LightingField::default(),
        follower: FollowerConfig::default(),
        obstacles: Vec::new(),
        scripts: Vec::new(),
    }
}

/// Two walls with narrow gaps and a dim area behind them.
fn playground() -> ScenarioConfig {
    let mut cfg = base(
        "playground",
        Arena {
            min: v(-2.0, -10.0),
            max: v(32.0, 10.0),
        },
    );
    cfg.obstacles = vec![
        rect(7.8, -10.0, 8.2, -3.0),
        rect(7.8, -1.0, 8.2, 1.5),
        rect(7.8, 3.5, 8.2, 10.0),
        rect(15.8, -10.0, 16.2, -1.5),
        rect(15.8, 0.5, 16.2, 10.0),
        rect(11.0, -5.0, 12.0, -4.0),
        rect(20.0, 2.0, 21.0, 3.2),
    ];
    cfg.lighting = LightingField {
        regions: vec![LightRegion {
            min: v(18.0, -10.0),
            max: v(26.0, 10.0),
            factor: 0.5,
        }],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for k in 0..10 {
        let y0 = rng.gen_range(-1.5..1.5);
        let gap1 = if k % 2 == 0 { -2.0 } else { 2.5 };
        let end = v(rng.gen_range(23.0..27.0), rng.gen_range(-4.0..4.0));
        let pts = [
            v(3.5, y0),
            v(6.8, gap1),
            v(9.2, gap1),
            v(12.5, rng.gen_range(-2.5..1.5)),
            v(14.8, -0.5),
            v(17.2, -0.5),
            end,
        ];
        let speed = rng.gen_range(0.7..1.0);
        cfg.scripts.push(ScriptConfig {
            robot_start: Pose::new(0.0, y0, 0.0),
            leaders: vec![leader("leader", 1000 + k, walk(&pts, speed, 1.0, 0.0))],
            target: 0,
            switch: None,
        });
    }
    cfg
}

/// Random trees; bushes on the leader's route are flown over by the leader but block the robot.
fn forest() -> ScenarioConfig {
    let mut cfg = base(
        "forest",
        Arena {
            min: v(-2.0, -10.0),
            max: v(32.0, 10.0),
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut routes = Vec::new();
    for _ in 0..10 {
        let mut pts = vec![v(3.5, rng.gen_range(-1.0..1.0))];
        for x in [9.0, 15.0, 21.0] {
            pts.push(v(x, rng.gen_range(-4.0..4.0)));
        }
        pts.push(v(rng.gen_range(25.0..27.0), rng.gen_range(-3.0..3.0)));
        routes.push(pts);
    }
    let mut discs: Vec<(Vec2, f64)> = Vec::new();
    while discs.len() < 28 {
        let c = v(rng.gen_range(6.0..24.0), rng.gen_range(-7.0..7.0));
        let r = rng.gen_range(0.25..0.5);
        if discs.iter().any(|(d, rd)| d.distance(c) < r + rd + 2.0) {
            continue;
        }
        discs.push((c, r));
    }
    for (c, r) in discs {
        let near_route = routes
            .iter()
            .any(|pts| pts.windows(2).any(|w| point_segment_distance(c, w[0], w[1]) < r + 0.6));
        let shape = Shape::disc(c, r);
        cfg.obstacles.push(if near_route {
            ObstacleConfig::overflyable(shape)
        } else {
            ObstacleConfig::fixed(shape)
        });
    }
    for (k, pts) in routes.iter().enumerate() {
        let speed = rng.gen_range(0.7..1.0);
        let mut l = leader("drone", 2000 + k as u64, walk(pts, speed, 1.0, 0.0));
        l.flies_over = true;
        cfg.scripts.push(ScriptConfig {
            robot_start: Pose::new(0.0, pts[0].y, 0.0),
            leaders: vec![l],
            target: 0,
            switch: None,
        });
    }
    cfg
}

/// Machines along aisles, a hand-over to a distant second leader, then a step back toward the robot.
fn factory() -> ScenarioConfig {
    let mut cfg = base(
        "factory",
        Arena {
            min: v(-2.0, -10.0),
            max: v(32.0, 10.0),
        },
    );
    cfg.obstacles = vec![
        rect(6.0, 2.0, 9.0, 4.0),
        rect(6.0, -4.0, 9.0, -2.0),
        rect(12.0, -1.0, 13.5, 1.0),
        ObstacleConfig::fixed(Shape::polygon(vec![v(16.0, 3.0), v(18.5, 2.5), v(17.5, 5.0)])),
        rect(16.5, -4.5, 18.0, -2.5),
        ObstacleConfig::fixed(Shape::disc(v(22.0, 0.5), 0.6)),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for k in 0..10 {
        let y0 = rng.gen_range(-1.0..1.0);
        let side = if k % 2 == 0 { 1.0 } else { -1.0 };
        let a_pts = [v(3.5, y0), v(10.5, 0.0), v(13.0, 2.3 * side), v(15.0, 0.0)];
        let speed = rng.gen_range(0.7..0.9);
        let mut a = walk(&a_pts, speed, 1.0, 0.0);
        let switch_time = a.last().unwrap().time + 2.0;
        // first leader steps aside after the hand-over
        let a_end = a.last().unwrap().pose;
        a.push(Waypoint {
            time: switch_time + 1.0,
            pose: a_end,
        });
        a.push(Waypoint {
            time: switch_time + 4.0,
            pose: Pose::new(a_end.x + 0.5, a_end.y - 3.0 * side, -FRAC_PI_2 * side),
        });
        let b_start = v(rng.gen_range(21.0..23.5), rng.gen_range(-3.0..-1.8) * side);
        let b_stop = v(rng.gen_range(25.5..27.0), rng.gen_range(-2.0..2.0));
        let back = b_stop + (v(15.0, 0.0) - b_stop).normalized() * 1.6;
        let mut b = vec![
            Waypoint {
                time: 0.0,
                pose: Pose::from_parts(b_start, PI),
            },
            Waypoint {
                time: switch_time + 1.0,
                pose: Pose::from_parts(b_start, 0.0),
            },
        ];
        let walk_time = b_start.distance(b_stop) / 0.8;
        b.push(Waypoint {
            time: switch_time + 1.0 + walk_time,
            pose: Pose::from_parts(b_stop, 0.0),
        });
        b.push(Waypoint {
            time: switch_time + 5.0 + walk_time,
            pose: Pose::from_parts(b_stop, PI),
        });
        // the retreat segment: the leader walks back toward the robot
        b.push(Waypoint {
            time: switch_time + 6.6 + walk_time,
            pose: Pose::from_parts(back, PI),
        });
        b.push(Waypoint {
            time: switch_time + 9.0 + walk_time,
            pose: Pose::from_parts(back, PI),
        });
        cfg.scripts.push(ScriptConfig {
            robot_start: Pose::new(0.0, y0, 0.0),
            leaders: vec![leader("operator", 3000 + k, a), leader("visitor", 3100 + k, b)],
            target: 0,
            switch: Some(SwitchCommand {
                time: switch_time,
                new_leader: 1,
            }),
        });
    }
    cfg
}

/// A mostly standing leader among wandering discs that change velocity every 3 s.
fn dynamic() -> ScenarioConfig {
    let mut cfg = base(
        "dynamic",
        Arena {
            min: v(-2.0, -8.0),
            max: v(20.0, 8.0),
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for _ in 0..6 {
        let c = v(rng.gen_range(5.0..15.0), rng.gen_range(-5.0..5.0));
        let heading = rng.gen_range(-PI..PI);
        cfg.obstacles.push(ObstacleConfig::dynamic(
            Shape::disc(c, rng.gen_range(0.3..0.45)),
            Vec2::from_angle(heading) * 0.4,
            3.0,
            [0.2, 0.6],
        ));
    }
    cfg.obstacles.push(rect(9.0, -7.5, 10.0, -6.5));
    for k in 0..10 {
        let y0 = rng.gen_range(-1.0..1.0);
        let stand = v(rng.gen_range(8.0..12.0), rng.gen_range(-2.0..2.0));
        let pts = [v(3.5, y0), stand];
        cfg.scripts.push(ScriptConfig {
            robot_start: Pose::new(0.0, y0, 0.0),
            leaders: vec![leader("leader", 4000 + k, walk(&pts, 0.8, 1.0, 18.0))],
            target: 0,
            switch: None,
        });
    }
    cfg
}

/// The leader sprints through a dog-leg corridor and stops past the bend, out of sight of the robot.
fn reappearance() -> ScenarioConfig {
    let mut cfg = base(
        "reappearance",
        Arena {
            min: v(-2.0, -6.0),
            max: v(24.0, 12.0),
        },
    );
    cfg.repeats = 4;
    cfg.obstacles = vec![
        rect(9.5, 0.9, 11.5, 9.0),
        rect(13.3, 0.9, 22.0, 5.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for k in 0..13 {
        let y0 = rng.gen_range(-0.5..0.5);
        let corner = v(12.4, 0.0);
        let bend = v(12.4, 6.0);
        let stop = v(rng.gen_range(17.0..18.0), 6.0);
        let walk_speed = rng.gen_range(0.7..0.85);
        let sprint = rng.gen_range(2.0..2.4);
        let mut wps = walk(&[v(3.5, y0), corner], walk_speed, 2.0, 0.0);
        let mut t = wps.last().unwrap().time;
        wps.last_mut().unwrap().pose.theta = FRAC_PI_2;
        t += corner.distance(bend) / sprint;
        wps.push(Waypoint {
            time: t,
            pose: Pose::from_parts(bend, 0.0),
        });
        t += bend.distance(stop) / sprint;
        wps.push(Waypoint {
            time: t,
            pose: Pose::from_parts(stop, 0.0),
        });
        wps.push(Waypoint {
            time: t + 10.0,
            pose: Pose::from_parts(stop, 0.0),
        });
        cfg.scripts.push(ScriptConfig {
            robot_start: Pose::new(0.0, y0, 0.0),
            leaders: vec![leader("leader", 5000 + k, wps)],
            target: 0,
            switch: None,
        });
    }
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate_and_round_trip_through_toml() {
        for name in BUILTIN_NAMES {
            let cfg = builtin(name).unwrap();
            cfg.validate().unwrap();
            let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg, "{name}");
        }
    }

    #[test]
    fn suite_has_forty_episodes_per_scenario() {
        for name in SUITE {
            let cfg = builtin(name).unwrap();
            assert_eq!(cfg.scripts.len(), 10);
            assert_eq!(cfg.episode_count(), 40);
        }
    }

    #[test]
    fn episode_seeds_are_distinct() {
        let cfg = builtin("forest").unwrap();
        let mut seeds: Vec<u64> = (0..10).flat_map(|s| (0..4).map(move |r| (s, r))).map(|(s, r)| cfg.episode_seed(s, r)).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 40);
    }

    #[test]
    fn malformed_input_is_a_config_error() {
        assert!(matches!(ScenarioConfig::from_toml("name = 3"), Err(ConfigError::Parse(_))));
        let mut cfg = builtin("playground").unwrap();
        cfg.repeats = 0;
        assert!(matches!(ScenarioConfig::from_toml(&cfg.to_toml()), Err(ConfigError::Invalid(_))));
        cfg.repeats = 1;
        cfg.scripts[0].target = 5;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }
}
