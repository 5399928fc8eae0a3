//! Leader perception: synthetic segmentation oracle, the two embedding memories,
//! re-identification and the constant-velocity tracker.

mod buffers;
mod embedding;
mod kalman;

pub use buffers::{
    match_leader, update_distance_buffer, update_temporal_buffer, BinEntry, BufferDump, BufferEntry,
    DistanceFrameBuffer, LeaderMemory, MemoryConfig, TemporalBuffer,
};
pub use embedding::{
    synthesize_embedding, AppearanceConfig, AppearanceModel, Embedding, LightRegion, LightingField,
};
pub use kalman::{
    isotropic_measurement_noise, kf_predict_update, record_last_seen, white_accel_noise, LeaderTrack,
    HEADING_HOLD_SPEED,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PerceptionError {
    #[error("leader is not visible")]
    NotVisible,
    #[error("both leader memories are empty")]
    EmptyBuffers,
    #[error("innovation covariance is not invertible; check the noise configuration")]
    NumericalFailure,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose, Vec2};
    use crate::sim::LeaderObservation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn view(distance: f64, fraction: f64) -> LeaderObservation {
        LeaderObservation {
            visible: true,
            visible_fraction: fraction,
            in_fov: true,
            point_set: vec![Vec2::new(distance, 0.0)],
            occluder_id: None,
        }
    }

    /// Seen at 3 m, then close up, then 20 partial views before leaving; reappears at 3 m.
    fn replay(use_distance_buffer: bool, seed: u64) -> (bool, f64) {
        let model = AppearanceModel::new(7, LightingField::default(), AppearanceConfig::default(), 12.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut memory = LeaderMemory::new(MemoryConfig {
            use_distance_buffer,
            ..MemoryConfig::default()
        });
        let robot = Pose::default();
        let mut t = 0.0;
        let mut feed = |d: f64, f: f64, memory: &mut LeaderMemory, rng: &mut ChaCha8Rng| {
            t += 0.1;
            let e = synthesize_embedding(&model, &view(d, f), &robot, t, rng).unwrap();
            memory.insert(e);
        };
        for k in 0..10 {
            feed(3.0 + 0.05 * k as f64, 1.0, &mut memory, &mut rng);
        }
        for _ in 0..40 {
            feed(1.0, 1.0, &mut memory, &mut rng);
        }
        for _ in 0..20 {
            feed(1.5, 0.3, &mut memory, &mut rng);
        }
        let back = synthesize_embedding(&model, &view(3.0, 1.0), &robot, 100.0, &mut rng).unwrap();
        memory.matches(&back).unwrap()
    }

    #[test]
    fn distance_buffer_recovers_leader_that_temporal_buffer_misses() {
        for seed in 0..10 {
            let (with_dfb, s_with) = replay(true, seed);
            let (without, s_without) = replay(false, seed);
            assert!(with_dfb, "seed {seed}: score {s_with}");
            assert!(!without, "seed {seed}: score {s_without}");
            assert!(s_with - s_without > 0.1);
        }
    }
}
