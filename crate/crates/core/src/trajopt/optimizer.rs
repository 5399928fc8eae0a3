use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::residuals::{collect_rows, convex_signed_distance, Family, HullCache, Row, FAMILIES};
use super::types::{ConstraintSet, OptimizerConfig, TrajOptError, Trajectory};
use crate::geometry::{normalize_angle, Pose, Vec2};
use crate::homotopy::signature_of_points;

/// Shortest segment length used when linearizing the length term.
const MIN_SEGMENT: f64 = 1e-3;

/// Per-iteration optimizer state, for debugging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub lambda: f64,
    pub accepted: bool,
    /// Weighted squared residual sum per family.
    pub residuals: Vec<(Family, f64)>,
}

pub fn write_trace_jsonl<W: Write>(records: &[IterationRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Travel time `Σ‖p_i − p_{i−1}‖ / v_cap`.
pub fn cost(traj: &Trajectory, v_cap: f64) -> f64 {
    traj.length() / v_cap
}

struct Problem<'a> {
    p0: Pose,
    m: usize,
    dt: f64,
    cs: &'a ConstraintSet,
    cfg: &'a OptimizerConfig,
    hulls: HullCache<'a>,
}

impl Problem<'_> {
    fn poses(&self, x: &DVector<f64>) -> Vec<Pose> {
        let mut out = Vec::with_capacity(self.m + 1);
        out.push(self.p0);
        for i in 0..self.m {
            out.push(Pose {
                x: x[3 * i],
                y: x[3 * i + 1],
                theta: x[3 * i + 2],
            });
        }
        out
    }

    fn rows(&self, poses: &[Pose], rows: &mut Vec<Row>) {
        rows.clear();
        collect_rows(poses, self.cs, self.cfg, self.dt, false, &self.hulls, rows);
    }

    fn objective(&self, poses: &[Pose], rows: &mut Vec<Row>) -> f64 {
        self.rows(poses, rows);
        let length: f64 = poses.windows(2).map(|w| w[0].position().distance(w[1].position())).sum();
        length / self.cs.v_cap + rows.iter().map(|r| r.weight * r.value * r.value).sum::<f64>()
    }

    /// Gauss-Newton model: gradient and PSD Hessian of J.
    fn linearize(&self, poses: &[Pose], rows: &[Row]) -> (DMatrix<f64>, DVector<f64>) {
        let n = 3 * self.m;
        let mut h = DMatrix::<f64>::zeros(n, n);
        let mut g = DVector::<f64>::zeros(n);
        let inv_v = 1.0 / self.cs.v_cap;
        for i in 0..self.m {
            let d = poses[i + 1].position() - poses[i].position();
            let len = d.norm();
            if len < 1e-12 {
                continue;
            }
            let u = d * (1.0 / len);
            let l = len.max(MIN_SEGMENT);
            let b = [
                [(1.0 - u.x * u.x) / l * inv_v, -u.x * u.y / l * inv_v],
                [-u.x * u.y / l * inv_v, (1.0 - u.y * u.y) / l * inv_v],
            ];
            let hi = 3 * i; // variables of pose i + 1
            g[hi] += u.x * inv_v;
            g[hi + 1] += u.y * inv_v;
            for r in 0..2 {
                for c in 0..2 {
                    h[(hi + r, hi + c)] += b[r][c];
                }
            }
            if i > 0 {
                let lo = 3 * (i - 1); // variables of pose i
                g[lo] -= u.x * inv_v;
                g[lo + 1] -= u.y * inv_v;
                for r in 0..2 {
                    for c in 0..2 {
                        h[(lo + r, lo + c)] += b[r][c];
                        h[(lo + r, hi + c)] -= b[r][c];
                        h[(hi + r, lo + c)] -= b[r][c];
                    }
                }
            }
        }
        for row in rows {
            let two_w = 2.0 * row.weight;
            for (a, ga) in row.entries() {
                g[a] += two_w * row.value * ga;
                for (b, gb) in row.entries() {
                    h[(a, b)] += two_w * ga * gb;
                }
            }
        }
        (h, g)
    }

    fn family_norms(&self, rows: &[Row]) -> Vec<(Family, f64)> {
        FAMILIES
            .iter()
            .map(|&f| {
                (
                    f,
                    rows.iter()
                        .filter(|r| r.family == f)
                        .map(|r| r.weight * r.value * r.value)
                        .sum(),
                )
            })
            .collect()
    }
}

/// Total objective J of a trajectory under a constraint set.
pub fn objective(traj: &Trajectory, cs: &ConstraintSet, cfg: &OptimizerConfig) -> f64 {
    let problem = Problem {
        p0: traj.poses[0],
        m: traj.poses.len() - 1,
        dt: traj.dt,
        cs,
        cfg,
        hulls: HullCache::new(&cs.static_groups),
    };
    problem.objective(&traj.poses, &mut Vec::new())
}

/// Locally minimizes travel time plus weighted squared constraint violations.
pub fn optimize(seed: &Trajectory, cs: &ConstraintSet, cfg: &OptimizerConfig) -> Result<Trajectory, TrajOptError> {
    optimize_traced(seed, cs, cfg, None)
}

/// [`optimize`] that also records every iteration.
pub fn optimize_traced(
    seed: &Trajectory,
    cs: &ConstraintSet,
    cfg: &OptimizerConfig,
    mut trace: Option<&mut Vec<IterationRecord>>,
) -> Result<Trajectory, TrajOptError> {
    if seed.poses.len() < 3 {
        return Err(TrajOptError::TooShort);
    }
    cs.validate()?;
    let problem = Problem {
        p0: seed.poses[0],
        m: seed.poses.len() - 1,
        dt: seed.dt,
        cs,
        cfg,
        hulls: HullCache::new(&cs.static_groups),
    };
    let n = 3 * problem.m;
    let mut x = DVector::<f64>::from_iterator(n, seed.poses[1..].iter().flat_map(|p| [p.x, p.y, p.theta]));
    let mut rows = Vec::new();
    let mut poses = problem.poses(&x);
    let mut j = problem.objective(&poses, &mut rows);
    let mut lambda = 1e-3;
    if let Some(t) = trace.as_deref_mut() {
        t.push(IterationRecord {
            iteration: 0,
            cost: j,
            lambda,
            accepted: true,
            residuals: problem.family_norms(&rows),
        });
    }
    let mut trial_rows = Vec::new();
    for it in 1..=cfg.iterations {
        let (h, g) = problem.linearize(&poses, &rows);
        let mut accepted = false;
        let mut decrease = 0.0;
        for _ in 0..10 {
            let mut a = h.clone();
            for k in 0..n {
                a[(k, k)] += lambda * (h[(k, k)] + 1e-6);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 4.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let x_new = &x + step;
            let poses_new = problem.poses(&x_new);
            let j_new = problem.objective(&poses_new, &mut trial_rows);
            if j_new.is_finite() && j_new < j {
                decrease = j - j_new;
                x = x_new;
                poses = poses_new;
                j = j_new;
                std::mem::swap(&mut rows, &mut trial_rows);
                lambda = (lambda / 3.0).max(1e-9);
                accepted = true;
                break;
            }
            lambda *= 4.0;
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(IterationRecord {
                iteration: it,
                cost: j,
                lambda,
                accepted,
                residuals: problem.family_norms(&rows),
            });
        }
        if !accepted || decrease < cfg.tol {
            break;
        }
    }

    let poses: Vec<Pose> = poses
        .into_iter()
        .map(|p| Pose {
            theta: normalize_angle(p.theta),
            ..p
        })
        .collect();
    let mut out = Trajectory::new(poses, seed.dt);
    out.cost = cost(&out, cs.v_cap);
    let centroids: Vec<Vec2> = cs.static_groups.iter().map(|h| h.centroid()).collect();
    out.signature = match signature_of_points(&out.positions(), &centroids) {
        Ok(s) => s,
        Err(e) => {
            return Err(TrajOptError::Infeasible {
                reason: e.to_string(),
                trajectory: Box::new(out),
            })
        }
    };

    let goal_err = cs.goal.error(&out.end());
    let clearance = min_clearance(&out, cs);
    if goal_err > 3.0 * cfg.eps {
        return Err(TrajOptError::Infeasible {
            reason: format!("goal error {goal_err:.3} exceeds 3ε"),
            trajectory: Box::new(out),
        });
    }
    if clearance < 0.0 {
        return Err(TrajOptError::Infeasible {
            reason: format!("clearance {clearance:.3} is negative"),
            trajectory: Box::new(out),
        });
    }
    Ok(out)
}

/// Smallest signed distance from a free pose to any inflated hull or predicted dynamic obstacle.
pub fn min_clearance(traj: &Trajectory, cs: &ConstraintSet) -> f64 {
    let mut best = f64::INFINITY;
    for (i, pose) in traj.poses.iter().enumerate().skip(1) {
        let p = pose.position();
        for hull in &cs.static_groups {
            best = best.min(convex_signed_distance(hull, p).0);
        }
        for o in &cs.dynamic_obstacles {
            best = best.min(p.distance(o.at(i as f64 * traj.dt)) - o.radius);
        }
    }
    best
}

/// Largest segment speed of a trajectory.
pub fn max_speed(traj: &Trajectory) -> f64 {
    traj.poses
        .windows(2)
        .map(|w| w[0].position().distance(w[1].position()) / traj.dt)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;
    use crate::trajopt::GoalConstraint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    const DT: f64 = 0.3;

    fn straight_seed(start: Pose, target: Vec2, v_cap: f64, heading: Option<f64>) -> Trajectory {
        Trajectory::from_polyline(start, &[target], v_cap, DT, 40, heading)
    }

    #[test]
    fn cost_examples() {
        let t = Trajectory::new(vec![Pose::new(0.0, 0.0, 0.0), Pose::new(1.5, 0.0, 0.0)], 0.3);
        assert!((cost(&t, 1.5) - 1.0).abs() < 1e-12);
        let t = Trajectory::new(vec![Pose::new(1.0, 1.0, 0.0), Pose::new(1.0, 1.0, 0.0)], 0.3);
        assert_eq!(cost(&t, 1.0), 0.0);
        let t = Trajectory::new(
            vec![
                Pose::new(0.0, 0.0, 0.0),
                Pose::new(1.0, 0.0, 0.0),
                Pose::new(1.0, 2.0, 0.0),
                Pose::new(3.0, 2.0, 0.0),
            ],
            0.3,
        );
        assert!((cost(&t, 1.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn free_space_point_pose_is_straight() {
        let goal = GoalConstraint::PointPose {
            pose: Pose::new(3.0, 0.0, 0.0),
            eps: 0.2,
        };
        let cs = ConstraintSet::new(goal, 1.5);
        let seed = straight_seed(Pose::default(), Vec2::new(3.0, 0.0), 1.5, Some(0.0));
        let out = optimize(&seed, &cs, &OptimizerConfig::default()).unwrap();
        assert!((out.cost - 2.0).abs() <= 0.1, "cost {}", out.cost);
        assert!(out.poses.iter().all(|p| p.y.abs() < 1e-6));
    }

    #[test]
    fn line_goal_endpoint_slides_to_foot() {
        let (a, b) = (Vec2::new(3.0, -2.0), Vec2::new(3.0, 2.0));
        let cs = ConstraintSet::new(GoalConstraint::LineSet { start: a, end: b }, 1.5);
        let seed = straight_seed(Pose::default(), b, 1.5, None);
        let out = optimize(&seed, &cs, &OptimizerConfig::default()).unwrap();
        let best_fixed = (0..100)
            .map(|k| a.lerp(b, k as f64 / 99.0).norm() / 1.5)
            .fold(f64::INFINITY, f64::min);
        assert!(out.cost <= best_fixed + 1e-3, "{} vs {}", out.cost, best_fixed);
        assert!(out.end().y.abs() < 0.1);
    }

    #[test]
    fn arc_goal_ends_facing_center() {
        let center = Vec2::new(4.0, 1.0);
        let goal = GoalConstraint::ArcSet {
            center,
            radius: 1.5,
            start_angle: 0.0,
            span: 2.0 * PI,
            eps: 0.2,
        };
        let cs = ConstraintSet::new(goal.clone(), 1.0);
        let target = goal.nearest_point(Vec2::default());
        let seed = straight_seed(Pose::default(), target, 1.0, goal.final_heading(target));
        let out = optimize(&seed, &cs, &OptimizerConfig::default()).unwrap();
        let end = out.end();
        let facing = (center - end.position()).angle();
        assert!(crate::geometry::angle_diff(end.theta, facing).abs() <= 0.2);
        assert!((end.position().distance(center) - 1.5).abs() <= 0.2);
    }

    #[test]
    fn trace_is_monotone_and_serializes() {
        let goal = GoalConstraint::PointPose {
            pose: Pose::new(2.0, 2.0, FRAC_PI_2),
            eps: 0.2,
        };
        let cs = ConstraintSet::new(goal, 1.0);
        let seed = straight_seed(Pose::default(), Vec2::new(2.0, 2.0), 1.0, Some(FRAC_PI_2));
        let mut trace = Vec::new();
        let _ = optimize_traced(&seed, &cs, &OptimizerConfig::default(), Some(&mut trace));
        assert!(trace.len() >= 2);
        assert!(trace.windows(2).all(|w| w[1].cost <= w[0].cost));
        let mut buf = Vec::new();
        write_trace_jsonl(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back: Vec<IterationRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(back, trace);
    }

    #[test]
    fn too_short_seed_is_rejected() {
        let cs = ConstraintSet::new(
            GoalConstraint::Point {
                position: Vec2::new(1.0, 0.0),
                eps: 0.2,
            },
            1.0,
        );
        let seed = Trajectory::new(vec![Pose::default(), Pose::new(1.0, 0.0, 0.0)], 0.3);
        assert!(matches!(optimize(&seed, &cs, &OptimizerConfig::default()), Err(TrajOptError::TooShort)));
    }

    #[test]
    fn seeded_detours_around_a_hull() {
        let cfg = OptimizerConfig::default();
        let mut kept = 0;
        let n = 40;
        for seed in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = Vec2::new(3.0, rng.gen_range(-0.4..0.4));
            let r = rng.gen_range(0.5..0.8);
            let hull = Polygon::regular(c, r, 8);
            let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let via = Vec2::new(3.0, c.y + side * (r + 0.6));
            let target = Vec2::new(6.0, rng.gen_range(-1.0..1.0));
            let mut cs = ConstraintSet::new(
                GoalConstraint::PointPose {
                    pose: Pose::from_parts(target, 0.0),
                    eps: 0.2,
                },
                1.2,
            );
            cs.static_groups = vec![hull.clone()];
            let seed_traj = Trajectory::from_polyline(Pose::default(), &[via, target], 1.2, DT, 40, Some(0.0));
            let seed_sig = signature_of_points(&seed_traj.positions(), &[hull.centroid()]).unwrap();
            let j0 = objective(&seed_traj, &cs, &cfg);
            let out = optimize(&seed_traj, &cs, &cfg).unwrap();
            assert!(objective(&out, &cs, &cfg) <= j0 + 1e-9);
            assert!(min_clearance(&out, &cs) >= -1e-6);
            assert!(max_speed(&out) <= 1.2 * (1.0 + 1e-3), "speed {}", max_speed(&out));
            if out.signature == seed_sig {
                kept += 1;
            }
        }
        assert!(kept as f64 >= 0.95 * n as f64);
    }
}
