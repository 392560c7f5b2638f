//! `evaluate`: score methods on the test split of a dataset. Baselines run
//! as-is; model methods evaluate a checkpoint saved by `train` or
//! `benchmark`.

use std::path::Path;

use anyhow::{Context, Result};
use eegbench::metrics::{evaluate, Denoiser};
use eegbench::models::Model;

use crate::commands::{pairs_csv, train::sets_for_seed};
use crate::config::ExperimentConfig;
use crate::config_error;
use crate::methods::MethodKind;

pub fn run(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    generated: Option<&Path>,
) -> Result<()> {
    cfg.validate()?;
    let kinds: Vec<MethodKind> = cfg
        .methods
        .iter()
        .map(|name| MethodKind::parse(name))
        .collect::<Result<_>>()?;

    let model_count = kinds.iter().filter(|k| k.architecture().is_some()).count();
    if model_count > 0 && checkpoint.is_none() {
        return Err(config_error(
            "model methods need --checkpoint <dir> pointing at saved parameters",
        ));
    }
    if model_count > 1 {
        return Err(config_error(
            "one checkpoint serves one model; list a single model method per evaluate call",
        ));
    }

    for &seed in &cfg.seeds {
        let sets = sets_for_seed(cfg, seed, generated)?;
        for &kind in &kinds {
            let denoiser: Box<dyn Denoiser> = match kind.architecture() {
                Some(_) => {
                    let dir = checkpoint.expect("checked above");
                    let model = Model::load(dir)
                        .with_context(|| format!("loading checkpoint {}", dir.display()))?;
                    Box::new(model)
                }
                None => kind.baseline(cfg.artifact).expect("baseline exists"),
            };

            let report = evaluate(denoiser.as_ref(), &sets.test);
            let dir = cfg
                .out_dir
                .join("runs")
                .join(format!("{}_seed{seed}", kind.name()));
            std::fs::create_dir_all(&dir)
                .with_context(|| format!("creating {}", dir.display()))?;
            std::fs::write(dir.join("pairs.csv"), pairs_csv(kind.name(), seed, &report))?;
            std::fs::write(dir.join("aggregates.json"), report.aggregates_json()?)?;

            let scored: Vec<f64> = report
                .records
                .iter()
                .filter_map(|r| r.rrmse_temporal)
                .collect();
            let mean = if scored.is_empty() {
                f64::NAN
            } else {
                scored.iter().sum::<f64>() / scored.len() as f64
            };
            println!(
                "evaluated {} seed {seed}: {} pairs, mean temporal error {mean:.4} ({})",
                kind.name(),
                report.records.len(),
                dir.display(),
            );
        }
    }
    Ok(())
}
