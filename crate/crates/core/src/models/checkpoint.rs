//! Checkpoint directory format.
//!
//! A checkpoint is a directory holding one `.npy` array per parameter plus
//! `norm{i}_running_mean.npy` / `norm{i}_running_variance.npy` per
//! normalization site, described by a `manifest.json` naming the
//! architecture, its size knobs, and the parameter order. Loading validates
//! every name and shape against the architecture's own layout, so a
//! checkpoint cannot silently deserialize into the wrong network.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::dataset::{read_npy, write_npy};
use crate::error::{Error, Result};

use super::{init, Architecture, Model, ModelSpec, RunningNorm};

const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    architecture: String,
    input_len: usize,
    feature_maps: usize,
    branch_width: usize,
    rnn_hidden: usize,
    dropout: f64,
    /// Parameter file stems in layout order.
    params: Vec<String>,
    norm_sites: usize,
}

pub(super) fn save(model: &Model, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let plans = init::plans(&model.spec);
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        architecture: model.spec.architecture.name().to_string(),
        input_len: model.spec.input_len,
        feature_maps: model.spec.feature_maps,
        branch_width: model.spec.branch_width,
        rnn_hidden: model.spec.rnn_hidden,
        dropout: model.spec.dropout,
        params: plans.iter().map(|p| p.name.clone()).collect(),
        norm_sites: model.norms.len(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest serialization: {e}")))?;
    fs::write(dir.join(MANIFEST_FILE), json)?;
    for (plan, tensor) in plans.iter().zip(&model.params) {
        let path = dir.join(format!("{}.npy", plan.name));
        write_npy(&path, tensor.shape(), tensor.data())?;
    }
    for (i, norm) in model.norms.iter().enumerate() {
        let channels = norm.mean.len();
        write_npy(
            &dir.join(format!("norm{i}_running_mean.npy")),
            &[channels],
            &norm.mean,
        )?;
        write_npy(
            &dir.join(format!("norm{i}_running_variance.npy")),
            &[channels],
            &norm.variance,
        )?;
    }
    Ok(())
}

pub(super) fn load(dir: &Path) -> Result<Model> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let raw = fs::read_to_string(&manifest_path).map_err(|e| {
        Error::Format(format!("cannot read {}: {e}", manifest_path.display()))
    })?;
    let manifest: Manifest = serde_json::from_str(&raw)
        .map_err(|e| Error::Format(format!("manifest parse: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint format version {} is not supported",
            manifest.format_version
        )));
    }
    let architecture = Architecture::from_name(&manifest.architecture).ok_or_else(|| {
        Error::Format(format!("unknown architecture '{}'", manifest.architecture))
    })?;
    let spec = ModelSpec {
        architecture,
        input_len: manifest.input_len,
        feature_maps: manifest.feature_maps,
        branch_width: manifest.branch_width,
        rnn_hidden: manifest.rnn_hidden,
        dropout: manifest.dropout,
    };
    spec.validate()?;

    let plans = init::plans(&spec);
    let expected: Vec<&str> = plans.iter().map(|p| p.name.as_str()).collect();
    let listed: Vec<&str> = manifest.params.iter().map(String::as_str).collect();
    if expected != listed {
        return Err(Error::Format(
            "manifest parameter list does not match the architecture layout".into(),
        ));
    }
    let channels = init::norm_channels(&spec);
    if manifest.norm_sites != channels.len() {
        return Err(Error::Format(format!(
            "manifest lists {} normalization sites, architecture has {}",
            manifest.norm_sites,
            channels.len()
        )));
    }

    let mut params = Vec::with_capacity(plans.len());
    for plan in &plans {
        let array = read_npy(&dir.join(format!("{}.npy", plan.name)))?;
        if array.shape != plan.shape {
            return Err(Error::Format(format!(
                "{}: stored shape {:?} does not match expected {:?}",
                plan.name, array.shape, plan.shape
            )));
        }
        params.push(Tensor::new(array.shape, array.data)?);
    }
    let mut norms = Vec::with_capacity(channels.len());
    for (i, &c) in channels.iter().enumerate() {
        let mean = read_npy(&dir.join(format!("norm{i}_running_mean.npy")))?;
        let variance = read_npy(&dir.join(format!("norm{i}_running_variance.npy")))?;
        if mean.data.len() != c || variance.data.len() != c {
            return Err(Error::Format(format!(
                "normalization site {i}: expected {c} channels, got {}/{}",
                mean.data.len(),
                variance.data.len()
            )));
        }
        norms.push(RunningNorm {
            mean: mean.data,
            variance: variance.data,
        });
    }
    Ok(Model { spec, params, norms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelSpec, TrainConfig};
    use crate::signal::Segment;

    fn trained_cnn() -> Model {
        let spec = ModelSpec::simple_cnn(16).with_feature_maps(2);
        let mut model = Model::new(spec, 4).unwrap();
        let pairs: Vec<_> = (0..4)
            .map(|i| {
                let clean: Vec<f64> = (0..16).map(|t| ((t + i) as f64 * 0.5).sin()).collect();
                let dirty: Vec<f64> = clean
                    .iter()
                    .enumerate()
                    .map(|(t, &x)| x + 0.3 * (t as f64 * 1.3).cos())
                    .collect();
                let ground_truth = Segment::new(clean, 64).unwrap();
                let contaminated = Segment::new(dirty, 64).unwrap();
                let contaminated_std = contaminated.std_dev();
                crate::dataset::SemiSyntheticPair {
                    ground_truth,
                    contaminated,
                    noise_scale: 0.3,
                    snr_db: 0.0,
                    contaminated_std,
                    base_index: i,
                    artifact_index: i,
                }
            })
            .collect();
        model
            .train(&pairs, &[], &TrainConfig::new(2, 1).with_batch_size(2))
            .unwrap();
        model
    }

    #[test]
    fn round_trip_preserves_inference_bit_for_bit() {
        let model = trained_cnn();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        let restored = Model::load(dir.path()).unwrap();
        assert_eq!(restored.spec(), model.spec());
        let input = Tensor::new(
            vec![1, 16],
            (0..16).map(|i| (i as f64 * 0.9).sin() + 0.05).collect(),
        )
        .unwrap();
        let a = model.forward_batch(&input).unwrap();
        let b = restored.forward_batch(&input).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn load_rejects_missing_and_tampered_manifests() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Model::load(dir.path()), Err(Error::Format(_))));

        let model = trained_cnn();
        model.save(dir.path()).unwrap();
        let manifest_path = dir.path().join(MANIFEST_FILE);
        let tampered = fs::read_to_string(&manifest_path)
            .unwrap()
            .replace("simple_cnn", "banana_net");
        fs::write(&manifest_path, tampered).unwrap();
        assert!(matches!(Model::load(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn load_rejects_shape_drift() {
        let model = trained_cnn();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        // overwrite one parameter with a wrong shape
        write_npy(
            &dir.path().join("conv0_kernel.npy"),
            &[1, 1, 3],
            &[0.0, 0.0, 0.0],
        )
        .unwrap();
        assert!(matches!(Model::load(dir.path()), Err(Error::Format(_))));
    }
}
