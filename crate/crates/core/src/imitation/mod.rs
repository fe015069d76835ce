//! Dataset aggregation with an adaptive MPC teacher, and the plain
//! supervised baseline.

pub mod dataset;
pub mod run;

pub use dataset::{Dataset, TrainingExample};
pub use run::{rho_schedule, run_il, run_sl_baseline, run_training, IlConfig, IlOutcome, IterationLog, TrainingMode};
