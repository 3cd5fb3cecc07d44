//! Experiment plumbing: TOML configs, deterministic runs to CSV, and
//! comparison of finished runs.

mod compare;
mod config;
mod run;

pub use compare::{
    compare_runs, compare_tables, CompareReport, MetricDelta, MetricsTable, OrderingAssertion, Relation,
};
pub use config::{
    apply_override, default_eta, load_config, parse_config, DataConfig, DataSource, MlpConfig, ModelKind,
    NonConvexConfig, RunConfig, ScheduleEntry, TopologyKind, ETA_GRID,
};
pub use run::{run_to_string, Experiment, RunSummary};
