//! Robot-centered binary costmap and its obstacle groups.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::geometry::{convex_hull, Polygon, Pose, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostmapConfig {
    /// Side length W_map of the square map (m).
    pub width: f64,
    pub resolution: f64,
    /// Every hit marks the cells within this distance (m).
    pub inflation: f64,
}

impl Default for CostmapConfig {
    fn default() -> Self {
        Self {
            width: 8.0,
            resolution: 0.1,
            inflation: 0.4,
        }
    }
}

/// World-axis-aligned occupancy grid centered on the robot.
///
/// The grid corner is snapped to multiples of the resolution so cells line up across ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct Costmap {
    pub origin: Pose,
    pub corner: Vec2,
    pub width: f64,
    pub resolution: f64,
    pub size: usize,
    cells: Vec<bool>,
}

impl Costmap {
    pub fn empty(origin: Pose, config: &CostmapConfig) -> Self {
        let size = (config.width / config.resolution).round().max(1.0) as usize;
        let half = config.width / 2.0;
        let corner = Vec2::new(
            ((origin.x - half) / config.resolution).floor() * config.resolution,
            ((origin.y - half) / config.resolution).floor() * config.resolution,
        );
        Self {
            origin,
            corner,
            width: config.width,
            resolution: config.resolution,
            size,
            cells: vec![false; size * size],
        }
    }

    /// Grid from raw row-major cells (`iy * size + ix`).
    pub fn from_cells(origin: Pose, corner: Vec2, resolution: f64, size: usize, cells: Vec<bool>) -> Self {
        assert_eq!(cells.len(), size * size);
        Self {
            origin,
            corner,
            width: size as f64 * resolution,
            resolution,
            size,
            cells,
        }
    }

    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let fx = ((p.x - self.corner.x) / self.resolution).floor();
        let fy = ((p.y - self.corner.y) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.size as f64 || fy >= self.size as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Vec2 {
        self.corner + Vec2::new((ix as f64 + 0.5) * self.resolution, (iy as f64 + 0.5) * self.resolution)
    }

    pub fn is_occupied(&self, ix: usize, iy: usize) -> bool {
        ix < self.size && iy < self.size && self.cells[iy * self.size + ix]
    }

    pub fn occupied_at(&self, p: Vec2) -> bool {
        self.cell_of(p).is_some_and(|(ix, iy)| self.is_occupied(ix, iy))
    }

    pub fn set(&mut self, ix: usize, iy: usize, value: bool) {
        self.cells[iy * self.size + ix] = value;
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(move |(i, _)| (i % self.size, i / self.size))
    }

    /// Square test against the map extent around the robot.
    pub fn contains(&self, p: Vec2) -> bool {
        let half = self.width / 2.0;
        (p.x - self.origin.x).abs() <= half && (p.y - self.origin.y).abs() <= half
    }

    /// Where the segment from the robot towards `target` leaves the map square.
    pub fn edge_point_towards(&self, target: Vec2) -> Vec2 {
        let c = self.origin.position();
        let d = target - c;
        let half = self.width / 2.0;
        let scale = [d.x.abs(), d.y.abs()]
            .iter()
            .filter(|v| **v > 1e-12)
            .map(|v| half / v)
            .fold(f64::INFINITY, f64::min);
        if !scale.is_finite() {
            return c;
        }
        c + d * scale.min(1.0)
    }

    /// Corners of the map square, counterclockwise from bottom-left.
    pub fn square(&self) -> [Vec2; 4] {
        let c = self.origin.position();
        let h = self.width / 2.0;
        [
            c + Vec2::new(-h, -h),
            c + Vec2::new(h, -h),
            c + Vec2::new(h, h),
            c + Vec2::new(-h, h),
        ]
    }

    fn mark_disc(&mut self, p: Vec2, radius: f64) {
        let r = self.resolution;
        let reach = (radius / r).ceil() as i64 + 1;
        // hits just outside the grid can still inflate into it
        let cx = ((p.x - self.corner.x) / r).floor() as i64;
        let cy = ((p.y - self.corner.y) / r).floor() as i64;
        for iy in (cy - reach).max(0)..=(cy + reach).min(self.size as i64 - 1) {
            for ix in (cx - reach).max(0)..=(cx + reach).min(self.size as i64 - 1) {
                let lo = self.corner + Vec2::new(ix as f64 * r, iy as f64 * r);
                let qx = p.x.clamp(lo.x, lo.x + r);
                let qy = p.y.clamp(lo.y, lo.y + r);
                let inside = p.x >= lo.x && p.x < lo.x + r && p.y >= lo.y && p.y < lo.y + r;
                if inside || Vec2::new(qx, qy).distance(p) <= radius {
                    self.set(ix as usize, iy as usize, true);
                }
            }
        }
    }
}

/// Rasterizes robot-frame scan points, minus the leader's points, into an inflated grid.
pub fn build_costmap(scan: &[Vec2], leader_points: &[Vec2], robot: &Pose, config: &CostmapConfig) -> Costmap {
    let mut map = Costmap::empty(*robot, config);
    let filter = config.resolution / 2.0;
    for &s in scan {
        if leader_points.iter().any(|l| l.distance(s) <= filter) {
            continue;
        }
        map.mark_disc(robot.transform_point(s), config.inflation.max(0.0));
    }
    map
}

/// A connected cluster of occupied cells outlined by its convex hull.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleGroup {
    pub id: usize,
    pub cells: Vec<(usize, usize)>,
    pub boundary: Polygon,
    pub centroid: Vec2,
}

/// 8-connected components, numbered in scan order from the top-left cell.
pub fn cluster_groups(map: &Costmap) -> Vec<ObstacleGroup> {
    let n = map.size;
    let mut label = vec![usize::MAX; n * n];
    let mut groups = Vec::new();
    let mut queue = VecDeque::new();
    for iy in (0..n).rev() {
        for ix in 0..n {
            if !map.is_occupied(ix, iy) || label[iy * n + ix] != usize::MAX {
                continue;
            }
            let id = groups.len();
            let mut cells = Vec::new();
            label[iy * n + ix] = id;
            queue.push_back((ix, iy));
            while let Some((x, y)) = queue.pop_front() {
                cells.push((x, y));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= n as i64 || ny >= n as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if map.is_occupied(nx, ny) && label[ny * n + nx] == usize::MAX {
                            label[ny * n + nx] = id;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
            cells.sort_unstable_by_key(|&(x, y)| (y, x));
            let boundary = group_hull(map, &cells);
            let centroid = boundary.centroid();
            groups.push(ObstacleGroup {
                id,
                cells,
                boundary,
                centroid,
            });
        }
    }
    groups
}

fn group_hull(map: &Costmap, cells: &[(usize, usize)]) -> Polygon {
    let r = map.resolution;
    let mut corners = Vec::new();
    for &(x, y) in cells {
        let interior = x > 0
            && y > 0
            && [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)]
                .iter()
                .all(|&(a, b)| map.is_occupied(a, b));
        if interior {
            continue;
        }
        let lo = map.corner + Vec2::new(x as f64 * r, y as f64 * r);
        corners.extend([lo, lo + Vec2::new(r, 0.0), lo + Vec2::new(r, r), lo + Vec2::new(0.0, r)]);
    }
    Polygon::new(convex_hull(&corners))
}
