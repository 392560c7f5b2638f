//! Segment banks, dataset splitting, and semi-synthetic pair generation.
//!
//! The generation pipeline mirrors the benchmark protocol: pick a clean EEG
//! segment and an artifact segment, mix them at each target SNR, and keep
//! the clean segment as ground truth. Splits are decided on base segment
//! indices before the SNR expansion, so no ground-truth row ever appears in
//! more than one of train/validation/test.

mod npy;
mod surrogate;

pub use npy::{read_npy, write_npy, NpyArray};
pub use surrogate::{default_dims, synth_surrogate, synth_surrogate_with};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::{mix, noise_scale_for_snr, Segment};
use crate::{dsp, par};

/// What a bank's rows contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankKind {
    Eeg,
    Eog,
    Emg,
}

/// Which artifact family a generated dataset simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactType {
    Ocular,
    Myogenic,
}

impl ArtifactType {
    /// The bank kind holding this artifact's segments.
    pub fn bank_kind(self) -> BankKind {
        match self {
            ArtifactType::Ocular => BankKind::Eog,
            ArtifactType::Myogenic => BankKind::Emg,
        }
    }
}

/// A matrix of equal-length segments sharing one sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentBank {
    kind: BankKind,
    data: Vec<f64>,
    rows: usize,
    cols: usize,
    fs: u32,
}

impl SegmentBank {
    pub fn new(kind: BankKind, data: Vec<f64>, rows: usize, cols: usize, fs: u32) -> Result<Self> {
        if rows == 0 || cols < 2 || data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "bank of {rows}x{cols} rows inconsistent with {} values",
                data.len()
            )));
        }
        if fs == 0 {
            return Err(Error::InvalidInput("bank sampling rate must be positive".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("bank contains non-finite values".into()));
        }
        Ok(SegmentBank {
            kind,
            data,
            rows,
            cols,
            fs,
        })
    }

    /// Load a bank from a 2-D `.npy` matrix.
    pub fn from_npy(kind: BankKind, path: &Path, fs: u32) -> Result<Self> {
        let arr = read_npy(path)?;
        if arr.shape.len() != 2 {
            return Err(Error::Format(format!(
                "{}: bank needs a 2-D matrix, got shape {:?}",
                path.display(),
                arr.shape
            )));
        }
        SegmentBank::new(kind, arr.data, arr.shape[0], arr.shape[1], fs)
    }

    pub fn to_npy(&self, path: &Path) -> Result<()> {
        write_npy(path, &[self.rows, self.cols], &self.data)
    }

    pub fn kind(&self) -> BankKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn fs(&self) -> u32 {
        self.fs
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn segment(&self, i: usize) -> Result<Segment> {
        if i >= self.rows {
            return Err(Error::InvalidInput(format!(
                "row {i} out of range, bank has {} rows",
                self.rows
            )));
        }
        Segment::new(self.row(i).to_vec(), self.fs)
    }

    /// Resample every row to a new rate, preserving row count.
    pub fn resampled(&self, fs_to: u32) -> Result<Self> {
        if fs_to == self.fs {
            return Ok(self.clone());
        }
        let rows: Vec<Vec<f64>> = par::map_range(self.rows, |i| {
            let seg = Segment::new(self.row(i).to_vec(), self.fs).expect("bank row is valid");
            dsp::resample(&seg, fs_to).map(Segment::into_samples)
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(self.rows * cols);
        for row in rows {
            data.extend(row);
        }
        SegmentBank::new(self.kind, data, self.rows, cols, fs_to)
    }
}

/// Train/validation/test proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::InvalidInput(
                "split ratios must all be positive".into(),
            ));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "split ratios must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

/// Disjoint index lists covering `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Deterministically partition `0..n`. Validation and test sizes are the
/// floor of their shares; the remainder goes to train.
pub fn split(n: usize, ratios: SplitRatios, seed: u64) -> Result<SplitIndices> {
    ratios.validate()?;
    let val_size = (n as f64 * ratios.val).floor() as usize;
    let test_size = (n as f64 * ratios.test).floor() as usize;
    if val_size == 0 || test_size == 0 || val_size + test_size >= n {
        return Err(Error::InvalidInput(format!(
            "{n} segments cannot give every split at least one row at ratios {ratios:?}"
        )));
    }
    let train_size = n - val_size - test_size;

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);

    let mut train = indices[..train_size].to_vec();
    let mut val = indices[train_size..train_size + val_size].to_vec();
    let mut test = indices[train_size + val_size..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, val, test })
}

/// The ten benchmark SNR targets in dB, ascending.
pub fn ten_snr_levels() -> Vec<f64> {
    (-7..=2).map(f64::from).collect()
}

/// Settings for one dataset generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub artifact: ArtifactType,
    pub snr_levels_db: Vec<f64>,
    pub seed: u64,
    pub split: SplitRatios,
    /// Keep one artifact partner per base pair across all SNR levels
    /// (the default) instead of re-pairing at each level.
    pub same_partner_across_levels: bool,
}

impl GenerationConfig {
    pub fn new(artifact: ArtifactType, seed: u64) -> Self {
        GenerationConfig {
            artifact,
            snr_levels_db: ten_snr_levels(),
            seed,
            split: SplitRatios::default(),
            same_partner_across_levels: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.snr_levels_db.is_empty() {
            return Err(Error::InvalidInput("no SNR levels configured".into()));
        }
        if self.snr_levels_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("SNR levels must be finite".into()));
        }
        self.split.validate()
    }
}

/// One clean/contaminated segment pair at a known contamination level.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiSyntheticPair {
    pub ground_truth: Segment,
    pub contaminated: Segment,
    /// Multiplier applied to the artifact before mixing.
    pub noise_scale: f64,
    pub snr_db: f64,
    /// Population standard deviation of the contaminated segment, the
    /// divisor used when pairs are normalized for training.
    pub contaminated_std: f64,
    /// Row of the EEG bank the ground truth came from.
    pub base_index: usize,
    /// Row of the artifact bank mixed in.
    pub artifact_index: usize,
}

/// Output of [`generate_semisynthetic`].
#[derive(Debug, Clone)]
pub struct GeneratedSets {
    pub train: Vec<SemiSyntheticPair>,
    pub val: Vec<SemiSyntheticPair>,
    pub test: Vec<SemiSyntheticPair>,
    pub fs: u32,
    pub splits: SplitIndices,
}

impl GeneratedSets {
    pub fn total_pairs(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }
}

// Generator stream ids, so each random decision has its own substream.
const STREAM_PARTNERS: u64 = 1;
const STREAM_REUSE: u64 = 2;

/// Build train/val/test pair sets from an EEG bank and an artifact bank.
///
/// Ocular banks must share rate and length with the EEG bank. For the
/// myogenic task the EEG bank is first resampled to the artifact rate, and
/// EEG rows are reused within each split to reach the artifact count.
pub fn generate_semisynthetic(
    eeg: &SegmentBank,
    artifacts: &SegmentBank,
    cfg: &GenerationConfig,
) -> Result<GeneratedSets> {
    cfg.validate()?;
    if eeg.kind() != BankKind::Eeg {
        return Err(Error::InvalidInput(format!(
            "first bank must hold EEG rows, got {:?}",
            eeg.kind()
        )));
    }
    if artifacts.kind() != cfg.artifact.bank_kind() {
        return Err(Error::InvalidInput(format!(
            "{:?} generation needs a {:?} bank, got {:?}",
            cfg.artifact,
            cfg.artifact.bank_kind(),
            artifacts.kind()
        )));
    }

    match cfg.artifact {
        ArtifactType::Ocular => generate_ocular(eeg, artifacts, cfg),
        ArtifactType::Myogenic => generate_myogenic(eeg, artifacts, cfg),
    }
}

fn generate_ocular(
    eeg: &SegmentBank,
    artifacts: &SegmentBank,
    cfg: &GenerationConfig,
) -> Result<GeneratedSets> {
    if eeg.fs() != artifacts.fs() || eeg.cols() != artifacts.cols() {
        return Err(Error::InvalidInput(format!(
            "ocular banks must match: EEG {}x{} @ {} Hz vs artifacts {}x{} @ {} Hz",
            eeg.rows(),
            eeg.cols(),
            eeg.fs(),
            artifacts.rows(),
            artifacts.cols(),
            artifacts.fs()
        )));
    }
    let n_base = eeg.rows().min(artifacts.rows());
    let splits = split(n_base, cfg.split, cfg.seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STREAM_PARTNERS);
    // partner table: per level when re-pairing, shared row otherwise
    let n_levels = cfg.snr_levels_db.len();
    let table_rows = if cfg.same_partner_across_levels { 1 } else { n_levels };
    let partners: Vec<Vec<usize>> = (0..table_rows)
        .map(|_| {
            (0..n_base)
                .map(|_| rng.random_range(0..artifacts.rows()))
                .collect()
        })
        .collect();

    let expand = |base_indices: &[usize]| -> Result<Vec<SemiSyntheticPair>> {
        let jobs: Vec<(usize, usize, f64)> = base_indices
            .iter()
            .flat_map(|&i| {
                cfg.snr_levels_db.iter().enumerate().map(move |(li, &snr)| {
                    let partner_row = if cfg.same_partner_across_levels { 0 } else { li };
                    (i, partner_row, snr)
                })
            })
            .collect();
        par::map_slice(&jobs, |&(i, partner_row, snr)| {
            make_pair(eeg, artifacts, i, partners[partner_row][i], snr)
        })
        .into_iter()
        .collect()
    };

    Ok(GeneratedSets {
        train: expand(&splits.train)?,
        val: expand(&splits.val)?,
        test: expand(&splits.test)?,
        fs: eeg.fs(),
        splits,
    })
}

fn generate_myogenic(
    eeg: &SegmentBank,
    artifacts: &SegmentBank,
    cfg: &GenerationConfig,
) -> Result<GeneratedSets> {
    let eeg = eeg.resampled(artifacts.fs())?;
    if eeg.cols() != artifacts.cols() {
        return Err(Error::InvalidInput(format!(
            "EEG rows resample to {} samples but artifact rows have {}",
            eeg.cols(),
            artifacts.cols()
        )));
    }

    // EEG rows are split first; reuse happens only inside each part
    let eeg_splits = split(eeg.rows(), cfg.split, cfg.seed)?;
    let artifact_splits = split(artifacts.rows(), cfg.split, cfg.seed.wrapping_add(1))?;

    let mut reuse_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    reuse_rng.set_stream(STREAM_REUSE);

    let n_levels = cfg.snr_levels_db.len();
    let mut build_part =
        |eeg_part: &[usize], artifact_part: &[usize]| -> Result<Vec<SemiSyntheticPair>> {
            let count = artifact_part.len();
            // every EEG row of the part once, then uniform-random reuse
            let assignment_count = if cfg.same_partner_across_levels { 1 } else { n_levels };
            let assignments: Vec<Vec<usize>> = (0..assignment_count)
                .map(|_| {
                    let mut rows: Vec<usize> =
                        eeg_part.iter().copied().take(count).collect();
                    while rows.len() < count {
                        let extra = eeg_part[reuse_rng.random_range(0..eeg_part.len())];
                        rows.push(extra);
                    }
                    rows
                })
                .collect();

            let jobs: Vec<(usize, usize, f64)> = (0..count)
                .flat_map(|j| {
                    cfg.snr_levels_db.iter().enumerate().map(move |(li, &snr)| {
                        let row = if cfg.same_partner_across_levels { 0 } else { li };
                        (j, row, snr)
                    })
                })
                .collect();
            par::map_slice(&jobs, |&(j, row, snr)| {
                make_pair(&eeg, artifacts, assignments[row][j], artifact_part[j], snr)
            })
            .into_iter()
            .collect()
        };

    let train = build_part(&eeg_splits.train, &artifact_splits.train)?;
    let val = build_part(&eeg_splits.val, &artifact_splits.val)?;
    let test = build_part(&eeg_splits.test, &artifact_splits.test)?;

    Ok(GeneratedSets {
        train,
        val,
        test,
        fs: artifacts.fs(),
        splits: eeg_splits,
    })
}

fn make_pair(
    eeg: &SegmentBank,
    artifacts: &SegmentBank,
    base_index: usize,
    artifact_index: usize,
    snr_db: f64,
) -> Result<SemiSyntheticPair> {
    let clean = eeg.segment(base_index)?;
    let artifact = artifacts.segment(artifact_index)?;
    let noise_scale = noise_scale_for_snr(&clean, &artifact, snr_db)?;
    let contaminated = mix(&clean, &artifact, noise_scale)?;
    let contaminated_std = contaminated.std_dev();
    Ok(SemiSyntheticPair {
        ground_truth: clean,
        contaminated,
        noise_scale,
        snr_db,
        contaminated_std,
        base_index,
        artifact_index,
    })
}

/// Manifest stored next to the generated `.npy` matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub artifact: ArtifactType,
    pub seed: u64,
    pub snr_levels_db: Vec<f64>,
    pub fs: u32,
    pub segment_len: usize,
    pub splits: SplitIndices,
    pub pairs: SplitPairMeta,
}

/// Per-split pair metadata, index-aligned with the matrix rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitPairMeta {
    pub train: Vec<PairMeta>,
    pub val: Vec<PairMeta>,
    pub test: Vec<PairMeta>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairMeta {
    pub base_index: usize,
    pub artifact_index: usize,
    pub noise_scale: f64,
    pub snr_db: f64,
    pub contaminated_std: f64,
}

/// Write a generated dataset as six `.npy` matrices plus a JSON manifest.
pub fn save_generated(sets: &GeneratedSets, cfg: &GenerationConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut meta = SplitPairMeta {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    let segment_len = sets
        .train
        .first()
        .or(sets.val.first())
        .or(sets.test.first())
        .map(|p| p.ground_truth.len())
        .ok_or_else(|| Error::InvalidInput("cannot save an empty dataset".into()))?;

    for (name, pairs, slot) in [
        ("train", &sets.train, &mut meta.train),
        ("val", &sets.val, &mut meta.val),
        ("test", &sets.test, &mut meta.test),
    ] {
        let mut clean = Vec::with_capacity(pairs.len() * segment_len);
        let mut contaminated = Vec::with_capacity(pairs.len() * segment_len);
        for p in pairs {
            clean.extend_from_slice(p.ground_truth.samples());
            contaminated.extend_from_slice(p.contaminated.samples());
            slot.push(PairMeta {
                base_index: p.base_index,
                artifact_index: p.artifact_index,
                noise_scale: p.noise_scale,
                snr_db: p.snr_db,
                contaminated_std: p.contaminated_std,
            });
        }
        write_npy(
            &dir.join(format!("{name}_ground_truth.npy")),
            &[pairs.len(), segment_len],
            &clean,
        )?;
        write_npy(
            &dir.join(format!("{name}_contaminated.npy")),
            &[pairs.len(), segment_len],
            &contaminated,
        )?;
    }

    let manifest = DatasetManifest {
        artifact: cfg.artifact,
        seed: cfg.seed,
        snr_levels_db: cfg.snr_levels_db.clone(),
        fs: sets.fs,
        segment_len,
        splits: sets.splits.clone(),
        pairs: meta,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest serialization failed: {e}")))?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

/// Load a dataset previously written by [`save_generated`].
pub fn load_generated(dir: &Path) -> Result<(GeneratedSets, DatasetManifest)> {
    let manifest_path = dir.join("manifest.json");
    let json = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: DatasetManifest = serde_json::from_str(&json)
        .map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;

    let load_part = |name: &str, meta: &[PairMeta]| -> Result<Vec<SemiSyntheticPair>> {
        let clean = read_npy(&dir.join(format!("{name}_ground_truth.npy")))?;
        let cont = read_npy(&dir.join(format!("{name}_contaminated.npy")))?;
        for (label, arr) in [("ground truth", &clean), ("contaminated", &cont)] {
            if arr.shape != [meta.len(), manifest.segment_len] {
                return Err(Error::Format(format!(
                    "{name} {label} matrix has shape {:?}, manifest says {}x{}",
                    arr.shape,
                    meta.len(),
                    manifest.segment_len
                )));
            }
        }
        let len = manifest.segment_len;
        meta.iter()
            .enumerate()
            .map(|(i, m)| {
                Ok(SemiSyntheticPair {
                    ground_truth: Segment::new(
                        clean.data[i * len..(i + 1) * len].to_vec(),
                        manifest.fs,
                    )?,
                    contaminated: Segment::new(
                        cont.data[i * len..(i + 1) * len].to_vec(),
                        manifest.fs,
                    )?,
                    noise_scale: m.noise_scale,
                    snr_db: m.snr_db,
                    contaminated_std: m.contaminated_std,
                    base_index: m.base_index,
                    artifact_index: m.artifact_index,
                })
            })
            .collect()
    };

    let sets = GeneratedSets {
        train: load_part("train", &manifest.pairs.train)?,
        val: load_part("val", &manifest.pairs.val)?,
        test: load_part("test", &manifest.pairs.test)?,
        fs: manifest.fs,
        splits: manifest.splits.clone(),
    };
    Ok((sets, manifest))
}
