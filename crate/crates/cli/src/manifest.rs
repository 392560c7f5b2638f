//! Run manifests: the resolved config snapshot plus per-run provenance,
//! enough to re-run any benchmark bit for bit. Timestamps live only here;
//! every numeric output file stays byte-identical across repeat runs.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const MANIFEST_FILE: &str = "run_manifest.json";

/// Outcome and outputs of one (method, seed) run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunEntry {
    pub method: String,
    pub seed: u64,
    /// `None` when the run succeeded, else what went wrong.
    pub error: Option<String>,
    /// Files the run produced, relative to the results root.
    pub outputs: Vec<String>,
}

impl RunEntry {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

/// Everything needed to reproduce or audit one benchmark invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub config: ExperimentConfig,
    pub runs: Vec<RunEntry>,
}

impl RunManifest {
    pub fn new(config: ExperimentConfig) -> RunManifest {
        RunManifest {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: now_unix(),
            finished_unix: 0,
            config,
            runs: Vec::new(),
        }
    }

    pub fn finish(&mut self) {
        self.finished_unix = now_unix();
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<RunManifest> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        let manifest = serde_json::from_str(&text)
            .with_context(|| format!("corrupt manifest {}", path.display()))?;
        Ok(manifest)
    }
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Scale;

    #[test]
    fn manifests_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = RunManifest::new(ExperimentConfig::preset(Scale::Desk));
        manifest.runs.push(RunEntry {
            method: "filter".into(),
            seed: 0,
            error: None,
            outputs: vec!["runs/filter_seed0/pairs.csv".into()],
        });
        manifest.finish();
        manifest.save(dir.path()).unwrap();

        let loaded = RunManifest::load(dir.path()).unwrap();
        assert_eq!(loaded.config, manifest.config);
        assert_eq!(loaded.runs.len(), 1);
        assert!(loaded.runs[0].succeeded());
    }

    #[test]
    fn corrupt_manifests_fail_with_the_file_name() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(MANIFEST_FILE), "{not json").unwrap();
        let err = RunManifest::load(dir.path()).unwrap_err();
        assert!(format!("{err:#}").contains(MANIFEST_FILE));
    }
}
