//! Scenario runner, metrics, traces and plots for the follower.

pub mod metrics;
pub mod run;
pub mod scenario;
pub mod svg;
pub mod trace;

pub use metrics::{compute_metrics, MetricsSummary};
pub use run::{run_ablation_suite, run_scenario, AblationTable};
pub use scenario::{builtin, ConfigError, ScenarioConfig, ScriptConfig, BUILTIN_NAMES, SUITE};
pub use svg::render_svg;
pub use trace::{read_trace, write_trace, TraceError, TRACE_SCHEMA, TRACE_VERSION};
