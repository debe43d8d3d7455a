//! Experiment runner around [`hybrid_fpn`]: configs, dataset shards, training
//! orchestration, benchmark sweeps and convergence curves.

pub mod checks;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod plot;

pub use commands::Context;
pub use config::{ExperimentConfig, Method, Preset};
pub use error::{CliError, CliResult};
