//! Data loading, band-pass preprocessing, synthetic fixtures and the
//! end-to-end causality-image classification pipeline.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod filter;
pub mod run;
pub mod synth;

pub use config::RunConfig;
pub use error::{PipelineError, Result};
