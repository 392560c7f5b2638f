//! The benchmark method roster. Baselines and trained models all evaluate
//! through the same denoiser interface; this module names them, builds the
//! baselines, and trains the models with decorrelated seed streams.

use anyhow::Result;
use eegbench::baselines::{EmdBaseline, FilterBaseline};
use eegbench::dataset::{ArtifactType, GeneratedSets};
use eegbench::metrics::Denoiser;
use eegbench::models::{Architecture, Model, TrainRecord};
use eegbench::signal::Segment;

use crate::config::ExperimentConfig;
use crate::config_error;

/// Every runnable method name, in canonical report order.
pub const METHOD_NAMES: [&str; 7] = [
    "identity",
    "filter",
    "emd",
    "fcnn",
    "simple_cnn",
    "complex_cnn",
    "rnn",
];

// Seed offsets separating the random streams of one repetition: bank
// synthesis and pairing use the seed itself, parameter init and the train
// loop get shifted copies so no two streams start identically.
const MODEL_INIT_OFFSET: u64 = 0x517c_c1b7_2722_0a95;
const TRAIN_LOOP_OFFSET: u64 = 0x2545_f491_4f6c_dd1d;

/// The do-nothing control: returns the contaminated input unchanged. Its
/// temporal error is exactly 1 by construction, anchoring the metric scale.
#[derive(Debug, Clone, Copy)]
pub struct IdentityBaseline;

impl Denoiser for IdentityBaseline {
    fn name(&self) -> &str {
        "identity"
    }

    fn denoise(&self, contaminated: &Segment) -> eegbench::Result<Segment> {
        Ok(contaminated.clone())
    }
}

/// A parsed method name: either a train-free baseline or a model that needs
/// a training pass before evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Identity,
    Filter,
    Emd,
    Model(Architecture),
}

impl MethodKind {
    pub fn parse(name: &str) -> Result<MethodKind> {
        match name {
            "identity" => Ok(MethodKind::Identity),
            "filter" => Ok(MethodKind::Filter),
            "emd" => Ok(MethodKind::Emd),
            other => match Architecture::from_name(other) {
                Some(arch) => Ok(MethodKind::Model(arch)),
                None => Err(config_error(format!(
                    "unknown method '{other}', expected one of {}",
                    METHOD_NAMES.join(", ")
                ))),
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Identity => "identity",
            MethodKind::Filter => "filter",
            MethodKind::Emd => "emd",
            MethodKind::Model(arch) => arch.name(),
        }
    }

    pub fn architecture(self) -> Option<Architecture> {
        match self {
            MethodKind::Model(arch) => Some(arch),
            _ => None,
        }
    }

    /// Construct the baseline denoiser; `None` for model methods.
    pub fn baseline(self, artifact: ArtifactType) -> Option<Box<dyn Denoiser>> {
        match self {
            MethodKind::Identity => Some(Box::new(IdentityBaseline)),
            MethodKind::Filter => Some(Box::new(FilterBaseline { artifact })),
            MethodKind::Emd => Some(Box::new(EmdBaseline::new(artifact))),
            MethodKind::Model(_) => None,
        }
    }
}

/// Initialize and train one model for one repetition seed.
pub fn train_model(
    cfg: &ExperimentConfig,
    arch: Architecture,
    seed: u64,
    sets: &GeneratedSets,
) -> Result<(Model, TrainRecord)> {
    let input_len = sets
        .train
        .first()
        .map(|p| p.ground_truth.len())
        .ok_or_else(|| anyhow::anyhow!("training set is empty"))?;
    let spec = cfg.model_spec(arch, input_len);
    let mut model = Model::new(spec, seed.wrapping_add(MODEL_INIT_OFFSET))?;
    let train_cfg = cfg.train_config(arch, seed.wrapping_add(TRAIN_LOOP_OFFSET));
    let record = model.train(&sets.train, &sets.val, &train_cfg)?;
    Ok((model, record))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_roster_name_parses_back_to_itself() {
        for name in METHOD_NAMES {
            let kind = MethodKind::parse(name).unwrap();
            assert_eq!(kind.name(), name);
        }
        assert!(MethodKind::parse("telepathy").is_err());
    }

    #[test]
    fn baselines_exist_exactly_for_non_models() {
        for name in METHOD_NAMES {
            let kind = MethodKind::parse(name).unwrap();
            let baseline = kind.baseline(ArtifactType::Ocular);
            assert_eq!(baseline.is_some(), kind.architecture().is_none());
            if let Some(method) = baseline {
                assert_eq!(method.name(), name);
            }
        }
    }

    #[test]
    fn identity_returns_its_input() {
        let seg = Segment::new(vec![1.0, -2.0, 3.0, 0.5], 64).unwrap();
        let out = IdentityBaseline.denoise(&seg).unwrap();
        assert_eq!(out.samples(), seg.samples());
    }
}
