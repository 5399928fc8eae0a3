//! Time-optimal trajectory optimization with soft constraints, plus candidate selection.

mod optimizer;
mod residuals;
mod select;
mod types;

pub use optimizer::{
    cost, max_speed, min_clearance, objective, optimize, optimize_traced, write_trace_jsonl, IterationRecord,
};
pub use residuals::{convex_signed_distance, residual_rows, Family, Row, FAMILIES};
pub use select::{select, similarity_factor, SimilarityForm};
pub use types::{
    arc_contains, ConstraintSet, DynamicObstacle, GoalConstraint, OptimizerConfig, TrajOptError, Trajectory,
    Weights,
};
