//! `train`: fit the configured models for every seed, writing per-epoch loss
//! curves and reloadable checkpoints. No evaluation; that is `evaluate` or
//! `benchmark`.

use std::path::Path;

use anyhow::{Context, Result};
use eegbench::dataset::{load_generated, GeneratedSets};
use eegbench::models::Architecture;

use crate::config::ExperimentConfig;
use crate::config_error;
use crate::methods::{train_model, MethodKind};
use crate::{data, fmt_f64};

/// Load a previously generated dataset when given, else synthesize or load
/// banks and generate for this seed.
pub fn sets_for_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    generated: Option<&Path>,
) -> Result<GeneratedSets> {
    match generated {
        Some(dir) => {
            let (sets, _) = load_generated(dir)
                .with_context(|| format!("loading generated dataset {}", dir.display()))?;
            Ok(sets)
        }
        None => data::generate_sets(cfg, seed),
    }
}

pub fn run(cfg: &ExperimentConfig, generated: Option<&Path>) -> Result<()> {
    cfg.validate()?;
    let models: Vec<Architecture> = cfg
        .methods
        .iter()
        .filter_map(|name| MethodKind::parse(name).ok().and_then(MethodKind::architecture))
        .collect();
    if models.is_empty() {
        return Err(config_error(
            "no trainable model among the configured methods; add fcnn, simple_cnn, complex_cnn, or rnn",
        ));
    }

    for &seed in &cfg.seeds {
        let sets = sets_for_seed(cfg, seed, generated)?;
        for &arch in &models {
            let dir = cfg
                .out_dir
                .join("runs")
                .join(format!("{}_seed{seed}", arch.name()));
            std::fs::create_dir_all(&dir)
                .with_context(|| format!("creating {}", dir.display()))?;

            let (model, record) = train_model(cfg, arch, seed, &sets)?;
            record.to_csv(&dir.join("losses.csv"))?;
            model.save(&dir.join("checkpoint"))?;

            let first = record.train_loss.first().copied().unwrap_or(f64::NAN);
            let last = record.train_loss.last().copied().unwrap_or(f64::NAN);
            println!(
                "trained {} seed {seed}: train loss {} -> {} over {} epochs ({})",
                arch.name(),
                fmt_f64(first),
                fmt_f64(last),
                record.train_loss.len(),
                dir.display(),
            );
        }
    }
    Ok(())
}
