//! Configuration and stage runner behind the `bitextmine` command.

pub mod config;
pub mod stages;

pub use config::PipelineConfig;
pub use stages::{run_pipeline, run_stage, Layout, RunError, Runner, Stage};
