//! Command implementations behind the `nlos` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod png;

pub use config::PipelineConfig;
pub use error::{CliError, Result};
