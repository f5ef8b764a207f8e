//! Batch pipeline and local calibration service on top of `roadplane-core`.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod service;
pub mod synth_out;

pub use config::{ConfigFile, Overrides, RunConfig};
pub use error::{PipelineError, Stage};
pub use pipeline::{run, RunOutcome, RunSummary};
