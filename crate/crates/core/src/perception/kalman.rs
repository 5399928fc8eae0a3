use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use super::PerceptionError;
use crate::geometry::{Pose, Vec2};

/// Below this leader speed the last known heading is held.
pub const HEADING_HOLD_SPEED: f64 = 0.3;

/// Constant-velocity track of the leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderTrack {
    /// `(x, y, vx, vy)`.
    pub state: [f64; 4],
    /// Row-major 4×4 covariance.
    pub covariance: [[f64; 4]; 4],
    pub nis: f64,
    pub last_seen_pose: Option<Pose>,
    pub last_seen_time: Option<f64>,
}

impl LeaderTrack {
    /// Starts a track at `position` with isotropic position/velocity uncertainty.
    pub fn new(position: Vec2, pos_sigma: f64, vel_sigma: f64) -> Self {
        let p = Matrix4::from_diagonal(&Vector4::new(
            pos_sigma * pos_sigma,
            pos_sigma * pos_sigma,
            vel_sigma * vel_sigma,
            vel_sigma * vel_sigma,
        ));
        Self {
            state: [position.x, position.y, 0.0, 0.0],
            covariance: to_rows(&p),
            nis: 0.0,
            last_seen_pose: None,
            last_seen_time: None,
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.state[0], self.state[1])
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.state[2], self.state[3])
    }

    pub fn covariance_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|r, c| self.covariance[r][c])
    }
}

fn to_rows(m: &Matrix4<f64>) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = m[(r, c)];
        }
    }
    out
}

/// Process noise of a continuous white-noise-acceleration model with spectral density `q`.
/// Positive definite for `dt > 0`.
pub fn white_accel_noise(dt: f64, q: f64) -> Matrix4<f64> {
    let a = q * dt.powi(3) / 3.0;
    let b = q * dt.powi(2) / 2.0;
    let c = q * dt;
    Matrix4::new(
        a, 0.0, b, 0.0, //
        0.0, a, 0.0, b, //
        b, 0.0, c, 0.0, //
        0.0, b, 0.0, c,
    )
}

pub fn isotropic_measurement_noise(sigma: f64) -> Matrix2<f64> {
    Matrix2::identity() * (sigma * sigma)
}

/// Constant-velocity predict, then update with the leader's mean position if present.
/// The update stores the normalized innovation squared νᵀS⁻¹ν in `nis`.
pub fn kf_predict_update(
    track: &LeaderTrack,
    measurement: Option<Vec2>,
    dt: f64,
    q: &Matrix4<f64>,
    r: &Matrix2<f64>,
) -> Result<LeaderTrack, PerceptionError> {
    debug_assert!(dt > 0.0);
    #[rustfmt::skip]
    let f = Matrix4::new(
        1.0, 0.0, dt, 0.0,
        0.0, 1.0, 0.0, dt,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    );
    let x = Vector4::from_column_slice(&track.state);
    let p = track.covariance_matrix();
    let x_pred = f * x;
    let p_pred = f * p * f.transpose() + q;

    let mut out = track.clone();
    let Some(z) = measurement else {
        out.state = [x_pred[0], x_pred[1], x_pred[2], x_pred[3]];
        out.covariance = to_rows(&symmetrize(&p_pred));
        return Ok(out);
    };

    let h = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
    let innovation = Vector2::new(z.x, z.y) - h * x_pred;
    let s = h * p_pred * h.transpose() + r;
    let s_inv = s.try_inverse().ok_or(PerceptionError::NumericalFailure)?;
    let nis = (innovation.transpose() * s_inv * innovation)[(0, 0)];
    if !nis.is_finite() {
        return Err(PerceptionError::NumericalFailure);
    }
    let k = p_pred * h.transpose() * s_inv;
    let x_new = x_pred + k * innovation;
    let i_kh = Matrix4::identity() - k * h;
    // Joseph form keeps the covariance symmetric positive definite.
    let p_new = i_kh * p_pred * i_kh.transpose() + k * r * k.transpose();

    out.state = [x_new[0], x_new[1], x_new[2], x_new[3]];
    out.covariance = to_rows(&symmetrize(&p_new));
    out.nis = nis.max(0.0);
    Ok(out)
}

fn symmetrize(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

/// Stores the leader's last known pose; heading follows its velocity unless it is nearly still.
pub fn record_last_seen(track: &LeaderTrack, mean_position: Vec2, mean_velocity: Vec2, t: f64) -> LeaderTrack {
    let mut out = track.clone();
    let heading = if mean_velocity.norm() < HEADING_HOLD_SPEED {
        track.last_seen_pose.map_or(0.0, |p| p.theta)
    } else {
        mean_velocity.angle()
    };
    out.last_seen_pose = Some(Pose::from_parts(mean_position, heading));
    out.last_seen_time = Some(t);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn nis_is_analytic_for_identity_innovation_covariance() {
        // zero prior covariance and zero process noise, R = I  ⇒  S = I
        let mut t = LeaderTrack::new(Vec2::ZERO, 0.0, 0.0);
        t.covariance = [[0.0; 4]; 4];
        let q = Matrix4::zeros();
        let r = Matrix2::identity();
        let out = kf_predict_update(&t, Some(Vec2::new(1.0, 0.0)), 0.1, &q, &r).unwrap();
        assert_relative_eq!(out.nis, 1.0, epsilon = 1e-12);
        let out = kf_predict_update(&t, Some(Vec2::ZERO), 0.1, &q, &r).unwrap();
        assert_relative_eq!(out.nis, 0.0);
    }

    #[test]
    fn singular_innovation_covariance_fails() {
        let mut t = LeaderTrack::new(Vec2::ZERO, 0.0, 0.0);
        t.covariance = [[0.0; 4]; 4];
        let r = Matrix2::zeros();
        let res = kf_predict_update(&t, Some(Vec2::new(1.0, 0.0)), 0.1, &Matrix4::zeros(), &r);
        assert_eq!(res, Err(PerceptionError::NumericalFailure));
    }

    #[test]
    fn predict_only_grows_covariance_and_keeps_last_seen() {
        let t = record_last_seen(&LeaderTrack::new(Vec2::ZERO, 0.1, 0.5), Vec2::new(1.0, 2.0), Vec2::new(1.0, 0.0), 3.0);
        let q = white_accel_noise(0.1, 0.5);
        let out = kf_predict_update(&t, None, 0.1, &q, &isotropic_measurement_noise(0.1)).unwrap();
        assert!(out.covariance[0][0] > t.covariance[0][0]);
        assert_eq!(out.last_seen_pose, t.last_seen_pose);
        assert_eq!(out.last_seen_time, Some(3.0));
    }

    #[test]
    fn covariance_stays_symmetric_positive_definite() {
        let mut t = LeaderTrack::new(Vec2::ZERO, 0.5, 1.0);
        let q = white_accel_noise(0.1, 0.5);
        let r = isotropic_measurement_noise(0.1);
        for k in 0..200 {
            let z = (k % 3 != 0).then(|| Vec2::new(0.1 * k as f64, (k as f64 * 0.3).sin()));
            t = kf_predict_update(&t, z, 0.1, &q, &r).unwrap();
            let p = t.covariance_matrix();
            assert_relative_eq!(p, p.transpose(), epsilon = 1e-12);
            let eig = p.symmetric_eigen();
            assert!(eig.eigenvalues.iter().all(|&e| e > 0.0));
            assert!(t.nis >= 0.0);
        }
    }

    #[test]
    fn last_seen_heading_rules() {
        let t = LeaderTrack::new(Vec2::ZERO, 0.1, 0.1);
        let east = record_last_seen(&t, Vec2::new(1.0, 1.0), Vec2::new(1.0, 0.0), 0.0);
        assert_relative_eq!(east.last_seen_pose.unwrap().theta, 0.0);
        let north = record_last_seen(&t, Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0), 0.0);
        assert_relative_eq!(north.last_seen_pose.unwrap().theta, FRAC_PI_2);
        let mut held = t.clone();
        held.last_seen_pose = Some(Pose::new(0.0, 0.0, 1.0));
        let held = record_last_seen(&held, Vec2::new(2.0, 2.0), Vec2::new(0.01, 0.0), 1.0);
        assert_relative_eq!(held.last_seen_pose.unwrap().theta, 1.0);
        assert_eq!(held.last_seen_pose.unwrap().position(), Vec2::new(2.0, 2.0));
    }

    /// Truth and filter share the model, so NIS ~ χ²(2) and its mean is 2.
    #[test]
    fn nis_mean_is_chi_square_two() {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;
        use rand_distr::StandardNormal;

        let dt = 0.1;
        let q = white_accel_noise(dt, 0.5);
        let r = isotropic_measurement_noise(0.2);
        let lq = q.cholesky().unwrap().l();
        let lr = r.cholesky().unwrap().l();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let normal4 = |rng: &mut ChaCha8Rng| Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let mut track = LeaderTrack::new(Vec2::ZERO, 0.5, 0.5);
        let l0 = track.covariance_matrix().cholesky().unwrap().l();
        let mut truth = Vector4::from_column_slice(&track.state) + l0 * normal4(&mut rng);
        #[rustfmt::skip]
        let f = Matrix4::new(1.0, 0.0, dt, 0.0, 0.0, 1.0, 0.0, dt, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let n = 10_000;
        let mut total = 0.0;
        for _ in 0..n {
            truth = f * truth + lq * normal4(&mut rng);
            let noise = lr * Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal));
            let z = Vec2::new(truth[0] + noise[0], truth[1] + noise[1]);
            track = kf_predict_update(&track, Some(z), dt, &q, &r).unwrap();
            total += track.nis;
        }
        let mean = total / n as f64;
        assert!((1.9..=2.1).contains(&mean), "NIS mean {mean}");
    }
}
