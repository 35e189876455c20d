use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use point_set_diffusion::DiffusionSchedule;

use crate::error::{CliError, CliResult};

/// Record of one command invocation, written next to its main output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub schedule: Option<ScheduleSummary>,
    /// SHA-256 of every model file read or written, keyed by path.
    pub model_hashes: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleSummary {
    pub steps: usize,
    pub noise_rate: f64,
    pub alpha_bar_last: f64,
}

impl ScheduleSummary {
    pub fn of(s: &DiffusionSchedule) -> Self {
        ScheduleSummary {
            steps: s.steps(),
            noise_rate: s.noise_rate(),
            alpha_bar_last: s.alpha_bar(s.steps()),
        }
    }
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.into(),
            config,
            seed,
            schedule: None,
            model_hashes: BTreeMap::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn hash_model(&mut self, path: &Path) -> CliResult<()> {
        let bytes =
            std::fs::read(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        self.model_hashes.insert(
            path.display().to_string(),
            hex::encode(Sha256::digest(&bytes)),
        );
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Write to `<main output>.manifest.json` and return that path.
    pub fn write_beside(&self, main_output: &Path) -> CliResult<PathBuf> {
        let mut name = main_output.as_os_str().to_owned();
        name.push(".manifest.json");
        let path = PathBuf::from(name);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text)
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
