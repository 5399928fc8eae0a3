//! Episode scoring.

use follow_core::follower::RunRecord;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub episodes: usize,
    pub follow_success_rate: f64,
    /// Mean over episodes of the fraction of time the leader was not identified.
    pub avg_leader_loss_ratio: f64,
    pub collision_rate: f64,
    /// Time-weighted robot–leader distance over identified ticks, pooled across episodes.
    pub avg_distance: f64,
}

/// `None` for an empty slice.
pub fn compute_metrics(records: &[RunRecord]) -> Option<MetricsSummary> {
    if records.is_empty() {
        return None;
    }
    let n = records.len() as f64;
    let success = records.iter().filter(|r| r.success).count() as f64;
    let collisions = records.iter().filter(|r| r.collision).count() as f64;
    let loss: f64 = records
        .iter()
        .map(|r| {
            let d = r.duration();
            if d > 0.0 {
                r.loss_time / d
            } else {
                0.0
            }
        })
        .sum();
    let integral: f64 = records.iter().map(|r| r.distance_integral).sum();
    let time: f64 = records.iter().map(|r| r.identified_time).sum();
    Some(MetricsSummary {
        episodes: records.len(),
        follow_success_rate: success / n,
        avg_leader_loss_ratio: loss / n,
        collision_rate: collisions / n,
        avg_distance: if time > 0.0 { integral / time } else { f64::NAN },
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use follow_core::adaptation::FollowState;
    use follow_core::follower::{TickRecord, Variant};
    use follow_core::sim::Arena;
    use follow_core::{Pose, Vec2};

    pub(crate) fn tick(time: f64, robot: Pose, leader: Pose, identified: bool) -> TickRecord {
        TickRecord {
            time,
            robot,
            leader,
            target: 0,
            state: FollowState::Following,
            signature: None,
            safe_distance: 1.0,
            v_cap: 1.0,
            visible: identified,
            in_fov: identified,
            visible_fraction: if identified { 1.0 } else { 0.0 },
            identified,
            match_score: None,
            collision: false,
            plan: None,
        }
    }

    pub(crate) fn record(distances: &[f64], identified: &[bool]) -> RunRecord {
        let dt = 0.1;
        let ticks: Vec<TickRecord> = distances
            .iter()
            .zip(identified)
            .enumerate()
            .map(|(i, (&d, &id))| tick(i as f64 * dt, Pose::default(), Pose::new(d, 0.0, 0.0), id))
            .collect();
        let identified_time = identified.iter().filter(|&&b| b).count() as f64 * dt;
        RunRecord {
            scenario: "unit".into(),
            script: 0,
            repeat: 0,
            seed: 1,
            variant: Variant::Full,
            dt,
            leader_end_time: 0.0,
            d_max: 3.0,
            arena: Arena {
                min: Vec2::new(-1.0, -1.0),
                max: Vec2::new(5.0, 5.0),
            },
            obstacles: Vec::new(),
            transitions: Vec::new(),
            success: *identified.last().unwrap(),
            collision: false,
            loss_time: ticks.len() as f64 * dt - identified_time,
            distance_integral: ticks
                .iter()
                .filter(|t| t.identified)
                .map(|t| dt * t.leader.position().distance(t.robot.position()))
                .sum(),
            identified_time,
            ticks,
        }
    }

    #[test]
    fn time_weighted_distance() {
        let m = compute_metrics(&[record(&[1.0, 2.0, 3.0], &[true; 3])]).unwrap();
        assert!((m.avg_distance - 2.0).abs() < 1e-12);
        assert_eq!(m.follow_success_rate, 1.0);
        assert_eq!(m.avg_leader_loss_ratio, 0.0);
    }

    #[test]
    fn loss_ratio_and_rates() {
        let mut a = record(&[1.0, 1.0, 5.0, 5.0], &[true, true, false, false]);
        a.collision = true;
        let b = record(&[2.0, 2.0], &[true, true]);
        let m = compute_metrics(&[a, b]).unwrap();
        assert!((m.avg_leader_loss_ratio - 0.25).abs() < 1e-12);
        assert_eq!(m.collision_rate, 0.5);
        assert_eq!(m.follow_success_rate, 0.5);
        assert!((m.avg_distance - 1.5).abs() < 1e-12);
    }

    #[test]
    fn empty_input_has_no_summary() {
        assert!(compute_metrics(&[]).is_none());
    }
}
