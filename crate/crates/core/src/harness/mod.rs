//! Experiment orchestration: configs, checkpoints, training runs, α sweeps
//! and run comparison.

mod checkpoint;
mod config;
pub mod gradcheck;
mod report;
mod train;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, ModelKind, OptimizerState, ParamRecord, RngState,
    SpecEcho, CHECKPOINT_VERSION,
};
pub use config::{Data, DataSource, ExperimentConfig};
pub use report::{compare_runs, sweep_alpha, sweep_table, Comparison, ComparisonRow, SweepRow, COMPARED};
pub use train::{
    distill, distill_seed, param_hash, resolve_teacher, run_tag, save_run, write_json, time_steps, train_teacher, Aggregate, Analysis, RunResult,
    SeedRecord, TeacherRun, TIMING_BATCHES,
};
