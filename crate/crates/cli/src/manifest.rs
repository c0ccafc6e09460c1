use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Sidecar written next to every output file.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub seed: u64,
    pub restarts: usize,
    pub opt_tol: f64,
    pub threads: Option<usize>,
    pub version: &'static str,
    pub timestamp: String,
    pub elapsed_seconds: f64,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn path_for(output: &Path) -> PathBuf {
        output.with_extension("manifest.json")
    }

    pub fn write(&self, output: &Path) -> Result<PathBuf, CliError> {
        let path = Self::path_for(output);
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::io(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
