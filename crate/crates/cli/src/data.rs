//! Bank acquisition and pair-set assembly: surrogate synthesis at either
//! scale, or real banks loaded from an `.npy` directory.

use std::path::PathBuf;

use anyhow::{Context, Result};
use eegbench::dataset::{
    generate_semisynthetic, synth_surrogate_with, BankKind, GeneratedSets,
    GenerationConfig, SegmentBank,
};

use crate::config::{bank_dims, ExperimentConfig};
use crate::config_error;

/// Environment variable naming the directory that holds the real banks.
pub const DATA_ENV: &str = "EEGBENCH_DATA";

// Decorrelates the artifact bank's surrogate stream from the EEG bank's.
const ARTIFACT_BANK_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

/// File name and sampling rate of a real bank.
pub fn bank_file(kind: BankKind) -> (&'static str, u32) {
    match kind {
        BankKind::Eeg => ("EEG_all_epochs.npy", 256),
        BankKind::Eog => ("EOG_all_epochs.npy", 256),
        BankKind::Emg => ("EMG_all_epochs.npy", 512),
    }
}

/// Where the real banks live: explicit config first, then the environment.
pub fn bank_root(cfg: &ExperimentConfig) -> Result<PathBuf> {
    if let Some(dir) = &cfg.dataset_dir {
        return Ok(dir.clone());
    }
    if let Some(dir) = std::env::var_os(DATA_ENV) {
        return Ok(PathBuf::from(dir));
    }
    let (eeg, _) = bank_file(BankKind::Eeg);
    let (art, _) = bank_file(cfg.artifact.bank_kind());
    Err(config_error(format!(
        "no dataset configured: pass --surrogate to synthesize banks, or point \
         --data / dataset_dir / ${DATA_ENV} at a directory containing {eeg} and {art}"
    )))
}

/// Load the clean bank and the artifact bank from disk.
pub fn load_real_banks(cfg: &ExperimentConfig) -> Result<(SegmentBank, SegmentBank)> {
    let root = bank_root(cfg)?;
    let mut banks = Vec::with_capacity(2);
    for kind in [BankKind::Eeg, cfg.artifact.bank_kind()] {
        let (name, fs) = bank_file(kind);
        let path = root.join(name);
        if !path.exists() {
            return Err(config_error(format!(
                "bank file {} not found; the dataset root must contain {name}",
                path.display()
            )));
        }
        let bank = SegmentBank::from_npy(kind, &path, fs)
            .with_context(|| format!("loading {}", path.display()))?;
        banks.push(bank);
    }
    let artifact_bank = banks.pop().expect("two banks were pushed");
    let eeg = banks.pop().expect("two banks were pushed");
    Ok((eeg, artifact_bank))
}

/// Synthesize surrogate banks at the configured scale for one seed.
pub fn surrogate_banks(cfg: &ExperimentConfig, seed: u64) -> Result<(SegmentBank, SegmentBank)> {
    let eeg_dims = bank_dims(cfg.scale, BankKind::Eeg);
    let art_kind = cfg.artifact.bank_kind();
    let art_dims = bank_dims(cfg.scale, art_kind);
    let eeg = synth_surrogate_with(BankKind::Eeg, eeg_dims.rows, seed, eeg_dims.len, eeg_dims.fs)?;
    let artifacts = synth_surrogate_with(
        art_kind,
        art_dims.rows,
        seed.wrapping_add(ARTIFACT_BANK_OFFSET),
        art_dims.len,
        art_dims.fs,
    )?;
    Ok((eeg, artifacts))
}

/// The generation settings for one repetition seed.
pub fn generation_config(cfg: &ExperimentConfig, seed: u64) -> GenerationConfig {
    let mut gen = GenerationConfig::new(cfg.artifact, seed);
    gen.snr_levels_db = cfg.snr_levels_db.clone();
    gen
}

/// Where a run's banks come from. Real banks are loaded once and shared
/// across seeds; surrogate banks are synthesized per seed.
pub enum BankSource {
    Surrogate,
    Real(Box<(SegmentBank, SegmentBank)>),
}

/// Resolve the bank source up front so configuration problems (no dataset,
/// missing files) surface before any run starts.
pub fn bank_source(cfg: &ExperimentConfig) -> Result<BankSource> {
    if cfg.surrogate {
        Ok(BankSource::Surrogate)
    } else {
        Ok(BankSource::Real(Box::new(load_real_banks(cfg)?)))
    }
}

/// Build the train/val/test pair sets for one repetition seed.
pub fn generate_from(
    cfg: &ExperimentConfig,
    source: &BankSource,
    seed: u64,
) -> Result<GeneratedSets> {
    let gen = generation_config(cfg, seed);
    let sets = match source {
        BankSource::Surrogate => {
            let (eeg, artifacts) = surrogate_banks(cfg, seed)?;
            generate_semisynthetic(&eeg, &artifacts, &gen)?
        }
        BankSource::Real(banks) => generate_semisynthetic(&banks.0, &banks.1, &gen)?,
    };
    Ok(sets)
}

/// One-shot convenience for commands that need a single seed's sets.
pub fn generate_sets(cfg: &ExperimentConfig, seed: u64) -> Result<GeneratedSets> {
    let source = bank_source(cfg)?;
    generate_from(cfg, &source, seed)
}

/// Segment length the models must accept for these sets.
pub fn segment_len(sets: &GeneratedSets) -> Result<usize> {
    sets.train
        .first()
        .or(sets.val.first())
        .or(sets.test.first())
        .map(|p| p.ground_truth.len())
        .ok_or_else(|| anyhow::anyhow!("generated dataset is empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Scale;
    use eegbench::dataset::ArtifactType;

    fn desk_config(artifact: ArtifactType) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::preset(Scale::Desk);
        cfg.artifact = artifact;
        cfg.surrogate = true;
        cfg
    }

    #[test]
    fn desk_ocular_split_sizes_follow_the_ratios() {
        let cfg = desk_config(ArtifactType::Ocular);
        let sets = generate_sets(&cfg, 0).unwrap();
        let levels = cfg.snr_levels_db.len();
        assert_eq!(sets.train.len(), 80 * levels);
        assert_eq!(sets.val.len(), 10 * levels);
        assert_eq!(sets.test.len(), 10 * levels);
        assert_eq!(segment_len(&sets).unwrap(), 64);
        assert_eq!(sets.fs, 64);
    }

    #[test]
    fn desk_myogenic_runs_at_the_artifact_rate() {
        let cfg = desk_config(ArtifactType::Myogenic);
        let sets = generate_sets(&cfg, 3).unwrap();
        assert_eq!(segment_len(&sets).unwrap(), 128);
        assert_eq!(sets.fs, 128);
    }

    #[test]
    fn missing_dataset_error_names_the_files() {
        let mut cfg = desk_config(ArtifactType::Ocular);
        cfg.surrogate = false;
        cfg.dataset_dir = None;
        // The variable may be set in the environment of whoever runs the
        // tests; only assert on the no-source case when it is absent.
        if std::env::var_os(DATA_ENV).is_none() {
            let err = generate_sets(&cfg, 0).unwrap_err();
            let msg = format!("{err}");
            assert!(msg.contains("EEG_all_epochs.npy"), "{msg}");
            assert!(msg.contains("EOG_all_epochs.npy"), "{msg}");
            assert!(err.is::<crate::ConfigError>());
        }

        let dir = tempfile::tempdir().unwrap();
        cfg.dataset_dir = Some(dir.path().to_path_buf());
        let err = generate_sets(&cfg, 0).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("EEG_all_epochs.npy"), "{msg}");
        assert!(err.is::<crate::ConfigError>());
    }

    #[test]
    fn same_seed_gives_identical_sets() {
        let cfg = desk_config(ArtifactType::Ocular);
        let a = generate_sets(&cfg, 11).unwrap();
        let b = generate_sets(&cfg, 11).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }
}
