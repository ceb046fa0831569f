//! Experiment orchestration: configuration, end-to-end runs, sweeps and traces.

pub mod artifacts;
pub mod config;
pub mod pipeline;
pub mod sweep;
pub mod trace;

pub use config::ExperimentConfig;
pub use pipeline::{
    campaign_traces, escalate, extract_keys, raw_key_metrics, run_campaign, run_experiment, run_pipeline,
    worst_block_errors, Experiment, Extraction, RunReport,
};
pub use sweep::{sweep, SweepTable};
pub use trace::{load_trace, save_trace, TraceSet};
