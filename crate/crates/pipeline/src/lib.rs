pub mod error;
pub mod fsutil;
pub mod nifti_io;
pub mod dataset;
pub mod tables;
pub mod artifacts;
pub mod config;
pub mod manifest;
pub mod stages;
pub mod synth;

pub use error::{PipelineError, Result};
