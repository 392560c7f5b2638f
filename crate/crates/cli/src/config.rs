//! Experiment configuration: scale presets, JSON config files, and command
//! line overrides, resolved with precedence flags > file > preset defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use eegbench::autodiff::AdamConfig;
use eegbench::dataset::{ten_snr_levels, ArtifactType, BankKind};
use eegbench::models::{Architecture, ModelSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::config_error;

/// Problem size preset. `desk` shrinks segments, banks, and network widths
/// so the whole pipeline runs in minutes on one machine; `paper` uses the
/// full-size protocol dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Paper,
}

impl Scale {
    pub fn parse(name: &str) -> Result<Scale> {
        match name {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(config_error(format!(
                "unknown scale '{other}', expected desk or paper"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scale::Desk => "desk",
            Scale::Paper => "paper",
        }
    }
}

/// Row counts and grid dimensions of the source banks at one scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BankDims {
    pub rows: usize,
    pub len: usize,
    pub fs: u32,
}

/// Surrogate bank dimensions for one bank kind at one scale. Paper scale
/// matches the real banks' shapes; desk shrinks everything so the slowest
/// model still trains in seconds.
pub fn bank_dims(scale: Scale, kind: BankKind) -> BankDims {
    match (scale, kind) {
        (Scale::Desk, BankKind::Eeg) => BankDims {
            rows: 100,
            len: 64,
            fs: 64,
        },
        (Scale::Desk, BankKind::Eog) => BankDims {
            rows: 100,
            len: 64,
            fs: 64,
        },
        (Scale::Desk, BankKind::Emg) => BankDims {
            rows: 100,
            len: 128,
            fs: 128,
        },
        (Scale::Paper, BankKind::Eeg) => BankDims {
            rows: 4514,
            len: 512,
            fs: 256,
        },
        (Scale::Paper, BankKind::Eog) => BankDims {
            rows: 3400,
            len: 512,
            fs: 256,
        },
        (Scale::Paper, BankKind::Emg) => BankDims {
            rows: 5598,
            len: 1024,
            fs: 512,
        },
    }
}

/// Epoch budget: one number for every model, or a per-model map keyed by
/// architecture name. JSON accepts either `"epochs": 40` or
/// `"epochs": {"fcnn": 60, "rnn": 100}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpochsSetting {
    All(usize),
    PerModel(BTreeMap<String, usize>),
}

/// On-disk config file. Every field is optional; anything absent falls back
/// to the scale preset's default. Unknown keys are rejected so typos fail
/// loudly instead of silently using a default.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub artifact: Option<String>,
    pub methods: Option<Vec<String>>,
    pub scale: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub epochs: Option<EpochsSetting>,
    pub snr_levels_db: Option<Vec<f64>>,
    pub dataset_dir: Option<PathBuf>,
    pub surrogate: Option<bool>,
    pub out_dir: Option<PathBuf>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
}

/// Command line values that overlay the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub artifact: Option<String>,
    pub scale: Option<String>,
    /// Single seed replacing the whole seeds list.
    pub seed: Option<u64>,
    pub methods: Option<Vec<String>>,
    pub epochs: Option<usize>,
    pub surrogate: bool,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
}

/// One fully resolved experiment. This is what the run manifest snapshots:
/// re-running with an identical value reproduces every numeric output byte
/// for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub artifact: ArtifactType,
    /// Methods to run, in report order. Mix of baselines and models.
    pub methods: Vec<String>,
    pub scale: Scale,
    /// One full repetition (regenerate, train, evaluate) per seed.
    pub seeds: Vec<u64>,
    /// Optional override of the per-architecture epoch defaults.
    pub epochs: Option<EpochsSetting>,
    pub snr_levels_db: Vec<f64>,
    /// Root holding the real segment banks; `None` means the EEGBENCH_DATA
    /// environment variable or the surrogate path.
    pub dataset_dir: Option<PathBuf>,
    /// Synthesize surrogate banks instead of loading real ones.
    pub surrogate: bool,
    pub out_dir: PathBuf,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl ExperimentConfig {
    /// Start from a scale preset's defaults.
    pub fn preset(scale: Scale) -> ExperimentConfig {
        let seeds = match scale {
            Scale::Desk => vec![0, 1],
            Scale::Paper => (0..10).collect(),
        };
        let learning_rate = match scale {
            Scale::Desk => 1e-3,
            Scale::Paper => AdamConfig::default().learning_rate,
        };
        ExperimentConfig {
            artifact: ArtifactType::Ocular,
            methods: crate::methods::METHOD_NAMES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            scale,
            seeds,
            epochs: None,
            snr_levels_db: ten_snr_levels(),
            dataset_dir: None,
            surrogate: false,
            out_dir: PathBuf::from("eegbench_out"),
            learning_rate,
            batch_size: 64,
        }
    }

    /// Resolve the effective config from an optional file plus overrides.
    pub fn resolve(file_path: Option<&Path>, ov: &Overrides) -> Result<ExperimentConfig> {
        let file = match file_path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config file {}", path.display()))?;
                serde_json::from_str::<ConfigFile>(&text)
                    .map_err(|e| config_error(format!("config file {}: {e}", path.display())))?
            }
            None => ConfigFile::default(),
        };

        let scale_name = ov.scale.as_deref().or(file.scale.as_deref());
        let scale = match scale_name {
            Some(name) => Scale::parse(name)?,
            None => Scale::Desk,
        };
        let mut cfg = ExperimentConfig::preset(scale);

        if let Some(name) = &file.artifact {
            cfg.artifact = parse_artifact(name)?;
        }
        if let Some(methods) = &file.methods {
            cfg.methods = methods.clone();
        }
        if let Some(seeds) = &file.seeds {
            cfg.seeds = seeds.clone();
        }
        if let Some(epochs) = &file.epochs {
            cfg.epochs = Some(epochs.clone());
        }
        if let Some(levels) = &file.snr_levels_db {
            cfg.snr_levels_db = levels.clone();
        }
        if let Some(dir) = &file.dataset_dir {
            cfg.dataset_dir = Some(dir.clone());
        }
        if let Some(surrogate) = file.surrogate {
            cfg.surrogate = surrogate;
        }
        if let Some(dir) = &file.out_dir {
            cfg.out_dir = dir.clone();
        }
        if let Some(lr) = file.learning_rate {
            cfg.learning_rate = lr;
        }
        if let Some(batch) = file.batch_size {
            cfg.batch_size = batch;
        }

        if let Some(name) = &ov.artifact {
            cfg.artifact = parse_artifact(name)?;
        }
        if let Some(methods) = &ov.methods {
            if !methods.is_empty() {
                cfg.methods = methods.clone();
            }
        }
        if let Some(seed) = ov.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(epochs) = ov.epochs {
            cfg.epochs = Some(EpochsSetting::All(epochs));
        }
        if ov.surrogate {
            cfg.surrogate = true;
        }
        if let Some(dir) = &ov.out {
            cfg.out_dir = dir.clone();
        }
        if let Some(dir) = &ov.data {
            cfg.dataset_dir = Some(dir.clone());
        }

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(config_error("config needs at least one method"));
        }
        for name in &self.methods {
            crate::methods::MethodKind::parse(name)?;
        }
        if self.seeds.is_empty() {
            return Err(config_error("config needs at least one seed"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(config_error("seeds list contains duplicates"));
        }
        if self.snr_levels_db.is_empty() || self.snr_levels_db.iter().any(|s| !s.is_finite()) {
            return Err(config_error("snr_levels_db must be nonempty and finite"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(config_error(format!(
                "learning_rate {} is not a positive number",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(config_error("batch_size must be at least 1"));
        }
        if let Some(EpochsSetting::PerModel(map)) = &self.epochs {
            for name in map.keys() {
                if Architecture::from_name(name).is_none() {
                    return Err(config_error(format!(
                        "epochs override names unknown model '{name}'"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Epoch budget for one architecture: explicit override first, then the
    /// scale default (desk trains everything for 35 epochs; paper uses the
    /// per-architecture schedule).
    pub fn epochs_for(&self, arch: Architecture) -> usize {
        match &self.epochs {
            Some(EpochsSetting::All(n)) => *n,
            Some(EpochsSetting::PerModel(map)) => map
                .get(arch.name())
                .copied()
                .unwrap_or_else(|| self.default_epochs(arch)),
            None => self.default_epochs(arch),
        }
    }

    fn default_epochs(&self, arch: Architecture) -> usize {
        match self.scale {
            Scale::Desk => 35,
            Scale::Paper => arch.default_epochs(self.artifact),
        }
    }

    /// Network hyperparameters for one architecture at this scale. Desk
    /// shrinks widths roughly 8x; depth and every layer kind are unchanged.
    pub fn model_spec(&self, arch: Architecture, input_len: usize) -> ModelSpec {
        let spec = match arch {
            Architecture::Fcnn => ModelSpec::fcnn(input_len),
            Architecture::SimpleCnn => ModelSpec::simple_cnn(input_len),
            Architecture::ComplexCnn => ModelSpec::complex_cnn(input_len),
            Architecture::Rnn => ModelSpec::rnn(input_len),
        };
        match self.scale {
            Scale::Desk => spec.with_feature_maps(8).with_branch_width(4),
            Scale::Paper => spec,
        }
    }

    pub fn train_config(&self, arch: Architecture, seed: u64) -> TrainConfig {
        TrainConfig::new(self.epochs_for(arch), seed)
            .with_batch_size(self.batch_size)
            .with_learning_rate(self.learning_rate)
    }
}

pub fn parse_artifact(name: &str) -> Result<ArtifactType> {
    match name {
        "ocular" => Ok(ArtifactType::Ocular),
        "myogenic" => Ok(ArtifactType::Myogenic),
        other => Err(config_error(format!(
            "unknown artifact '{other}', expected ocular or myogenic"
        ))),
    }
}

pub fn artifact_name(artifact: ArtifactType) -> &'static str {
    match artifact {
        ArtifactType::Ocular => "ocular",
        ArtifactType::Myogenic => "myogenic",
    }
}
