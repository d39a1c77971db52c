//! File formats, stage orchestration and the command-line front end for
//! `fedtopics-core`.

pub mod artifact;
pub mod config;
pub mod error;
pub mod ingest;
pub mod manifest;
pub mod stages;

pub use config::PipelineConfig;
pub use error::{PipelineError, Result};
pub use stages::{Outcome, Pipeline, Stage};
