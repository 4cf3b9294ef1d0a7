//! File formats, configuration and the staged command-line pipeline built
//! on `instsel-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod stages;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use pipeline::{run_pipeline, Layout, PipelineOutcome};
