//! Detour expansion of generalized trajectories and homotopy signatures.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmap::ObstacleGroup;
use crate::geometry::{point_segment_distance, segments_intersect, Polygon, Pose, Vec2};
use crate::graph::{segment_blocked, GeneralizedTrajectory, NodeKind, TopoGraph};
use crate::trajopt::{GoalConstraint, Trajectory};

/// Sweeps smaller than this fall back to the chord-side rule (rad).
pub const ANGLE_MIN: f64 = 0.2;

/// One ±1 value per obstacle group: +1 when the trajectory winds counterclockwise around it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct HomotopySignature {
    pub values: Vec<i8>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HomotopyError {
    #[error("trajectory passes through the centroid of group {0}")]
    DegenerateGeometry(usize),
    #[error("trajectory needs at least two points")]
    TooShort,
}

/// Total signed angle swept by the vector from `c` to a point moving along `points`.
pub fn swept_angle(points: &[Vec2], c: Vec2) -> f64 {
    points
        .windows(2)
        .map(|w| {
            let a = w[0] - c;
            let b = w[1] - c;
            a.cross(b).atan2(a.dot(b))
        })
        .sum()
}

pub fn signature_of_points(points: &[Vec2], centroids: &[Vec2]) -> Result<HomotopySignature, HomotopyError> {
    if points.len() < 2 {
        return Err(HomotopyError::TooShort);
    }
    let start = points[0];
    let chord = *points.last().unwrap() - start;
    let mut values = Vec::with_capacity(centroids.len());
    for (i, &c) in centroids.iter().enumerate() {
        if points.windows(2).any(|w| point_segment_distance(c, w[0], w[1]) < 1e-9) {
            return Err(HomotopyError::DegenerateGeometry(i));
        }
        let a = swept_angle(points, c);
        let v = if a.abs() >= ANGLE_MIN {
            if a > 0.0 {
                1
            } else {
                -1
            }
        } else if chord.cross(c - start) >= 0.0 {
            1
        } else {
            -1
        };
        values.push(v);
    }
    Ok(HomotopySignature { values })
}

pub fn signature(traj: &Trajectory, groups: &[ObstacleGroup]) -> Result<HomotopySignature, HomotopyError> {
    let centroids: Vec<Vec2> = groups.iter().map(|g| g.centroid).collect();
    signature_of_points(&traj.positions(), &centroids)
}

/// One trajectory per signature, the shortest of each class; order of first appearance.
pub fn dedup_by_signature(trajs: Vec<Trajectory>) -> Vec<Trajectory> {
    let mut slot: HashMap<HomotopySignature, usize> = HashMap::new();
    let mut out: Vec<Trajectory> = Vec::new();
    for t in trajs {
        match slot.get(&t.signature) {
            Some(&i) => {
                if t.length() < out[i].length() {
                    out[i] = t;
                }
            }
            None => {
                slot.insert(t.signature.clone(), out.len());
                out.push(t);
            }
        }
    }
    out
}

/// Maps the previous signature onto the current groups by nearest centroid within `tol`.
pub fn align_signature(
    previous: &HomotopySignature,
    previous_centroids: &[Vec2],
    current_centroids: &[Vec2],
    tol: f64,
) -> Vec<Option<i8>> {
    current_centroids
        .iter()
        .map(|c| {
            previous_centroids
                .iter()
                .zip(&previous.values)
                .map(|(p, v)| (p.distance(*c), *v))
                .filter(|(d, _)| *d <= tol)
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, v)| v)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detour {
    Clockwise,
    Counterclockwise,
}

/// Time parameterization of detour seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedParams {
    pub start: Pose,
    pub v_cap: f64,
    pub dt: f64,
    pub max_segments: usize,
    /// Seeds follow hull boundaries offset outward by this much.
    pub offset: f64,
}

/// Edge index and parameter of the boundary point of a convex polygon nearest to `q`.
fn boundary_position(poly: &Polygon, q: Vec2) -> (usize, f64) {
    let mut best = (0, 0.0, f64::INFINITY);
    let n = poly.vertices.len();
    for i in 0..n {
        let (a, b) = (poly.vertices[i], poly.vertices[(i + 1) % n]);
        let (p, t) = crate::geometry::closest_point_on_segment(q, a, b);
        let d = p.distance(q);
        if d < best.2 - 1e-12 {
            best = (i, t, d);
        }
    }
    (best.0, best.1)
}

fn edge_normal(poly: &Polygon, i: usize) -> Vec2 {
    let n = poly.vertices.len();
    let d = poly.vertices[(i + 1) % n] - poly.vertices[i];
    Vec2::new(d.y, -d.x).normalized()
}

fn offset_vertex(poly: &Polygon, i: usize, offset: f64) -> Vec2 {
    let n = poly.vertices.len();
    let n_prev = edge_normal(poly, (i + n - 1) % n);
    let n_next = edge_normal(poly, i);
    let denom = (1.0 + n_prev.dot(n_next)).max(1e-6);
    let mut shift = (n_prev + n_next) * (offset / denom);
    if shift.norm() > 3.0 * offset {
        shift = shift.normalized() * (3.0 * offset);
    }
    poly.vertices[i] + shift
}

/// Boundary walk from `entry` to `exit` on the chosen side, offset outward.
fn walk(poly: &Polygon, entry: Vec2, exit: Vec2, dir: Detour, offset: f64) -> Vec<Vec2> {
    let n = poly.vertices.len();
    if n < 3 {
        return vec![entry, exit];
    }
    let (e1, t1) = boundary_position(poly, entry);
    let (e2, t2) = boundary_position(poly, exit);
    let mut out = vec![offset_point(poly, e1, t1, entry, offset)];
    match dir {
        Detour::Counterclockwise => {
            if !(e1 == e2 && t2 >= t1) {
                let mut v = (e1 + 1) % n;
                loop {
                    out.push(offset_vertex(poly, v, offset));
                    if v == e2 {
                        break;
                    }
                    v = (v + 1) % n;
                }
            }
        }
        Detour::Clockwise => {
            if !(e1 == e2 && t2 <= t1) {
                let mut v = e1;
                let stop = (e2 + 1) % n;
                loop {
                    out.push(offset_vertex(poly, v, offset));
                    if v == stop {
                        break;
                    }
                    v = (v + n - 1) % n;
                }
            }
        }
    }
    out.push(offset_point(poly, e2, t2, exit, offset));
    out
}

fn offset_point(poly: &Polygon, edge: usize, t: f64, q: Vec2, offset: f64) -> Vec2 {
    let n = poly.vertices.len();
    if t < 1e-9 {
        offset_vertex(poly, edge, offset)
    } else if t > 1.0 - 1e-9 {
        offset_vertex(poly, (edge + 1) % n, offset)
    } else {
        q + edge_normal(poly, edge) * offset
    }
}

fn self_intersects(pts: &[Vec2]) -> bool {
    let k = pts.len();
    for i in 0..k.saturating_sub(1) {
        for j in (i + 2)..k.saturating_sub(1) {
            if segments_intersect(pts[i], pts[i + 1], pts[j], pts[j + 1]) {
                return true;
            }
        }
    }
    false
}

fn dedup_points(pts: Vec<Vec2>) -> Vec<Vec2> {
    let mut out: Vec<Vec2> = Vec::with_capacity(pts.len());
    for p in pts {
        if out.last().is_none_or(|q| q.distance(p) > 1e-6) {
            out.push(p);
        }
    }
    out
}

/// Geometric seeds for every clockwise/counterclockwise assignment over the path's obstacle nodes.
///
/// Assignments whose polyline self-intersects or crosses a hull are dropped, so at most `2^n` come back.
pub fn expand_detours(
    gt: &GeneralizedTrajectory,
    graph: &TopoGraph,
    groups: &[ObstacleGroup],
    goals: &[GoalConstraint],
    params: &SeedParams,
) -> Vec<Trajectory> {
    let obstacles = gt.obstacle_nodes();
    let n = obstacles.len();
    let goal_node = gt.goal_node();
    let NodeKind::Goal(goal_idx) = graph.nodes[goal_node].kind else {
        return Vec::new();
    };
    let goal_point = graph.nodes[goal_node].anchor;
    let mut seeds = Vec::new();
    for mask in 0..(1u32 << n) {
        let mut pts = vec![params.start.position()];
        let mut ok = true;
        for (k, &node) in obstacles.iter().enumerate() {
            let NodeKind::Group(gi) = graph.nodes[node].kind else {
                ok = false;
                break;
            };
            let prev = gt.nodes[k];
            let next = gt.nodes[k + 2];
            let (Some(e_in), Some(e_out)) = (graph.edge_between(prev, node), graph.edge_between(node, next)) else {
                ok = false;
                break;
            };
            let dir = if mask & (1 << k) != 0 {
                Detour::Clockwise
            } else {
                Detour::Counterclockwise
            };
            pts.extend(walk(
                &groups[gi].boundary,
                e_in.endpoint_on(node),
                e_out.endpoint_on(node),
                dir,
                params.offset,
            ));
        }
        if !ok {
            continue;
        }
        pts.push(goal_point);
        let pts = dedup_points(pts);
        if self_intersects(&pts) || pts.windows(2).any(|w| segment_blocked(groups, w[0], w[1])) {
            continue;
        }
        let heading = goals[goal_idx].final_heading(goal_point);
        let mut t = Trajectory::from_polyline(
            params.start,
            &pts[1..],
            params.v_cap,
            params.dt,
            params.max_segments,
            heading,
        );
        match signature(&t, groups) {
            Ok(sig) => t.signature = sig,
            Err(_) => continue,
        }
        seeds.push(t);
    }
    seeds
}
