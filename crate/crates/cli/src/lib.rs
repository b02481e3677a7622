//! Command-line orchestration: scenario generation, the staged pipeline,
//! services and plots.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod plots;
pub mod scenario;

pub use config::PipelineConfig;
pub use error::CliError;
pub use pipeline::{run_pipeline, RunReport};
