//! Run manifests written next to every output.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use qlink_core::Scenario;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub scenario_path: Option<String>,
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub wall_clock_s: f64,
    /// Command-specific arguments as parsed.
    pub args: toml::Table,
    /// Scenario after overrides and seed were applied.
    pub scenario: Option<Scenario>,
}

impl RunManifest {
    pub fn path_for(out_dir: &Path, command: &str) -> PathBuf {
        out_dir.join(format!("{command}.manifest"))
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = Self::path_for(out_dir, &self.command);
        let text = toml::to_string(self).context("serializing manifest")?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}
