//! Leader following in the plane: a deterministic simulator, leader perception with
//! distance-binned re-identification memory, goal-aware state adaptation and a
//! homotopy-aware time-optimal trajectory planner.

pub mod adaptation;
pub mod costmap;
pub mod follower;
pub mod geometry;
pub mod graph;
pub mod homotopy;
pub mod perception;
pub mod sim;
pub mod trajopt;

pub use geometry::{Polygon, Pose, Vec2};
