//! Replicated experiments, convergence diagnostics, step-time benchmarks
//! and file export.

pub mod bench;
pub mod diagnostics;
pub mod experiment;
pub mod export;

pub use bench::{benchmark_step_time, StepTiming};
pub use diagnostics::{convergence_diagnostics, replay_allocation, tracking_error, ConvergenceDiagnostics};
pub use experiment::{
    run_experiment, run_fixed_horizon, run_replications, run_trial, run_trial_with_state, summarize,
    tracking_target, ExperimentConfig, ExperimentSummary, Guarantee, RunRecord, TracePoint,
};
pub use export::{export_records, read_summary_json, write_metadata, write_records_csv, write_summary_json, Format};
