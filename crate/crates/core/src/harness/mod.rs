//! Experiment configuration, Monte-Carlo sweeps and their output files.

pub mod config;
pub mod io;
pub mod sweep;

pub use config::{CovMode, ExperimentConfig, SweepAxis};
pub use io::{read_snapshots, write_snapshots};
pub use sweep::{
    alpha_table_csv, emit_csv, fit_loglog_slope, run_alpha_table, run_mse_sweep, sweep_csv, AlphaRow, BetaRule,
    MseCurve, ReferencePoint, SweepResult, TrialOutcome,
};
