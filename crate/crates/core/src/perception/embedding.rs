use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::PerceptionError;
use crate::geometry::{Pose, Vec2};
use crate::sim::LeaderObservation;

/// Appearance descriptor of the leader with its confidence score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub vector: Vec<f64>,
    pub confidence: f64,
    pub distance_at_capture: f64,
    pub timestamp: f64,
}

impl Embedding {
    /// Cosine similarity of two unit vectors.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        dot(&self.vector, &other.vector)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Axis-aligned region with a lighting factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightRegion {
    pub min: Vec2,
    pub max: Vec2,
    pub factor: f64,
}

/// Lighting factor over the arena; 1.0 outside every region, first match wins.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LightingField {
    pub regions: Vec<LightRegion>,
}

impl LightingField {
    pub fn at(&self, p: Vec2) -> f64 {
        self.regions
            .iter()
            .find(|r| p.x >= r.min.x && p.x <= r.max.x && p.y >= r.min.y && p.y <= r.max.y)
            .map_or(1.0, |r| r.factor.clamp(0.0, 1.0))
    }
}

/// Knobs of the synthetic segmentation oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppearanceConfig {
    pub dim: usize,
    pub noise_sigma: f64,
    /// Rotation of the apparent descriptor per meter of viewing distance (rad/m).
    pub scale_drift: f64,
    /// Weight of the background-like component mixed in by partial views.
    pub partial_bias: f64,
}

impl Default for AppearanceConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            noise_sigma: 0.03,
            scale_drift: 0.4,
            partial_bias: 1.0,
        }
    }
}

/// Statistical stand-in for the segmentation network.
///
/// The apparent descriptor of a leader seen at distance `d` is
/// `cos(κd)·identity + sin(κd)·drift`: what the network extracts changes with scale.
/// Partial views mix in a background-like `clutter` direction with weight `1 - fraction`.
#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceModel {
    pub identity_vector: Vec<f64>,
    drift_vector: Vec<f64>,
    clutter_vector: Vec<f64>,
    pub lighting: LightingField,
    pub config: AppearanceConfig,
    /// Sensor range used by the range attenuation of the confidence.
    pub sensor_range: f64,
}

impl AppearanceModel {
    pub fn new(appearance_seed: u64, lighting: LightingField, config: AppearanceConfig, sensor_range: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(appearance_seed);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(3);
        while basis.len() < 3 {
            let mut v: Vec<f64> = (0..config.dim).map(|_| rng.sample(StandardNormal)).collect();
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            let n = norm(&v);
            if n > 1e-6 {
                v.iter_mut().for_each(|x| *x /= n);
                basis.push(v);
            }
        }
        let clutter_vector = basis.pop().unwrap();
        let drift_vector = basis.pop().unwrap();
        let identity_vector = basis.pop().unwrap();
        Self {
            identity_vector,
            drift_vector,
            clutter_vector,
            lighting,
            config,
            sensor_range,
        }
    }

    /// Noise-free apparent descriptor at viewing distance `d`.
    pub fn appearance_at(&self, d: f64) -> Vec<f64> {
        let (s, c) = (self.config.scale_drift * d).sin_cos();
        self.identity_vector
            .iter()
            .zip(&self.drift_vector)
            .map(|(u, w)| c * u + s * w)
            .collect()
    }

    pub fn range_attenuation(&self, d: f64) -> f64 {
        (1.0 - d / (2.0 * self.sensor_range)).clamp(0.5, 1.0)
    }
}

/// Produces the current leader embedding from a visible observation.
pub fn synthesize_embedding<R: Rng + ?Sized>(
    appearance: &AppearanceModel,
    obs: &LeaderObservation,
    robot_pose: &Pose,
    timestamp: f64,
    rng: &mut R,
) -> Result<Embedding, PerceptionError> {
    if !obs.visible {
        return Err(PerceptionError::NotVisible);
    }
    let centre = obs.mean_point().ok_or(PerceptionError::NotVisible)?;
    let distance = centre.distance(robot_pose.position());
    let fraction = obs.visible_fraction.clamp(0.0, 1.0);
    let light = appearance.lighting.at(centre);
    let signal = fraction * light;
    let clutter = appearance.config.partial_bias * (1.0 - fraction);
    let sigma = appearance.config.noise_sigma;
    let mut raw: Vec<f64> = appearance
        .appearance_at(distance)
        .iter()
        .zip(&appearance.clutter_vector)
        .map(|(a, c)| signal * a + clutter * c)
        .collect();
    if sigma > 0.0 {
        for x in raw.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x += sigma * z;
        }
    }
    let n = norm(&raw);
    if n < 1e-12 {
        return Err(PerceptionError::NotVisible);
    }
    raw.iter_mut().for_each(|x| *x /= n);
    Ok(Embedding {
        vector: raw,
        confidence: (signal * appearance.range_attenuation(distance)).clamp(0.0, 1.0),
        distance_at_capture: distance,
        timestamp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn obs_at(p: Vec2, fraction: f64) -> LeaderObservation {
        LeaderObservation {
            visible: true,
            visible_fraction: fraction,
            in_fov: true,
            point_set: vec![p],
            occluder_id: None,
        }
    }

    fn model(noise: f64, drift: f64, lighting: LightingField) -> AppearanceModel {
        AppearanceModel::new(
            42,
            lighting,
            AppearanceConfig {
                noise_sigma: noise,
                scale_drift: drift,
                ..AppearanceConfig::default()
            },
            12.0,
        )
    }

    #[test]
    fn basis_is_orthonormal() {
        let m = model(0.0, 0.4, LightingField::default());
        assert_relative_eq!(norm(&m.identity_vector), 1.0, epsilon = 1e-12);
        assert_relative_eq!(dot(&m.identity_vector, &m.drift_vector), 0.0, epsilon = 1e-12);
        assert_relative_eq!(dot(&m.identity_vector, &m.clutter_vector), 0.0, epsilon = 1e-12);
        assert_relative_eq!(norm(&m.appearance_at(3.7)), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn noiseless_full_view_returns_identity() {
        let m = model(0.0, 0.0, LightingField::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = synthesize_embedding(&m, &obs_at(Vec2::new(4.0, 0.0), 1.0), &Pose::default(), 0.0, &mut rng)
            .unwrap();
        for (a, b) in e.vector.iter().zip(&m.identity_vector) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        assert_relative_eq!(e.confidence, m.range_attenuation(4.0));
        assert_relative_eq!(e.confidence, 1.0 - 4.0 / 24.0);
        assert_relative_eq!(e.distance_at_capture, 4.0);
        assert_relative_eq!(norm(&e.vector), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn partial_views_are_less_similar_in_expectation() {
        let m = model(0.05, 0.4, LightingField::default());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let reference = m.appearance_at(3.0);
        let mean_cos = |fraction: f64, rng: &mut ChaCha8Rng| {
            let mut s = 0.0;
            for _ in 0..1000 {
                let e = synthesize_embedding(&m, &obs_at(Vec2::new(3.0, 0.0), fraction), &Pose::default(), 0.0, rng)
                    .unwrap();
                s += dot(&e.vector, &reference);
            }
            s / 1000.0
        };
        let full = mean_cos(1.0, &mut rng);
        let partial = mean_cos(0.2, &mut rng);
        assert!(partial < full, "partial {partial} should be below full {full}");
    }

    #[test]
    fn dim_light_halves_confidence() {
        let lighting = LightingField {
            regions: vec![LightRegion {
                min: Vec2::new(0.0, 5.0),
                max: Vec2::new(10.0, 10.0),
                factor: 0.5,
            }],
        };
        let m = model(0.0, 0.4, lighting);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lit = synthesize_embedding(&m, &obs_at(Vec2::new(3.0, 0.0), 0.8), &Pose::default(), 0.0, &mut rng)
            .unwrap();
        let dim = synthesize_embedding(
            &m,
            &obs_at(Vec2::new(3.0, 6.0), 0.8),
            &Pose::new(3.0, 3.0, 0.0),
            0.0,
            &mut rng,
        )
        .unwrap();
        assert_relative_eq!(dim.confidence, 0.5 * lit.confidence, epsilon = 1e-12);
    }

    #[test]
    fn invisible_observation_is_rejected() {
        let m = model(0.0, 0.0, LightingField::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = synthesize_embedding(&m, &LeaderObservation::default(), &Pose::default(), 0.0, &mut rng);
        assert_eq!(r, Err(PerceptionError::NotVisible));
    }
}
