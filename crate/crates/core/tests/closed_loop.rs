use follow_core::follower::{run_episode, EpisodeSetup, FollowerConfig, Variant};
use follow_core::perception::LightingField;
use follow_core::sim::{Arena, LeaderScript, ObstacleConfig, SensorModel, Shape, Waypoint, World};
use follow_core::{Pose, Vec2};

fn setup(seed: u64) -> EpisodeSetup {
    let leader = LeaderScript::new(
        "leader",
        5,
        vec![
            Waypoint { time: 0.0, pose: Pose::new(2.5, 0.0, 0.0) },
            Waypoint { time: 10.0, pose: Pose::new(10.0, 0.0, 0.0) },
            Waypoint { time: 16.0, pose: Pose::new(10.0, 5.0, 1.57) },
        ],
    );
    let obstacles = vec![ObstacleConfig::fixed(Shape::disc(Vec2::new(6.0, -0.9), 0.4))];
    let world = World::new(
        Arena { min: Vec2::new(-5.0, -10.0), max: Vec2::new(20.0, 10.0) },
        &obstacles,
        vec![leader],
        seed,
    )
    .unwrap();
    EpisodeSetup {
        world,
        robot_start: Pose::new(0.0, 0.0, 0.0),
        target: 0,
        switch: None,
        lighting: LightingField::default(),
        sensor: SensorModel::default(),
        settle_time: 5.0,
        seed,
    }
}

#[test]
fn follows_a_walking_leader() {
    let rec = run_episode(&setup(1), &FollowerConfig::default(), Variant::Full);
    assert!(!rec.collision);
    assert!(rec.success);
}
