//! Scenario harness: configuration, closed-loop run, event log and metrics.

pub mod config;
mod events;
mod metrics;
mod runner;

pub use config::{RawConfig, ScenarioConfig};
pub use events::{EventLog, EventRecord, RecordKind};
pub use metrics::{metrics_from_csv, metrics_to_csv, windowed_mean_sgcs, MetricsRow, METRICS_HEADER};
pub use runner::{
    predictor_tag, preload_model_id, run_scenario, train_preload, warmup_slots, RunSummary, ScenarioRun,
};
