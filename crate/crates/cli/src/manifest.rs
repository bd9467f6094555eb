use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Record of one command run, enough to replay it. Paths of outputs are
/// relative to the output directory.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub config_sha256: String,
    pub config: &'a PipelineConfig,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub details: Value,
}

impl<'a> Manifest<'a> {
    pub fn new(command: &'a str, config: &'a PipelineConfig) -> Self {
        Self {
            command,
            config_sha256: config.hash(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            details: Value::Null,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_NAME);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(path, e))
    }
}
