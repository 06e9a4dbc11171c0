//! Experiment runner behind the `gradtrack` command line tool.

pub mod compare;
pub mod config;
pub mod error;
pub mod experiment;
pub mod plot;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::{BenchError, Result};
