//! Experiment orchestration and result files.

pub mod config;
pub mod output;
pub mod run;
pub mod validate;

pub use config::{EvalMode, GraphSpec, Reference, RunConfig};
pub use output::{emit_results, format_float};
pub use run::{
    run_experiment_gamma_sweep, run_experiment_m_sweep, run_single, run_single_with, EpisodeRecord, RunOptions,
    RunTrace, Simulation, TrialTrace,
};
