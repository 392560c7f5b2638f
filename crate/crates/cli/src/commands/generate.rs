//! `generate`: build the semi-synthetic pair sets for every configured seed
//! and write them to disk as `.npy` matrices plus a JSON manifest.

use std::path::PathBuf;

use anyhow::{Context, Result};
use eegbench::dataset::save_generated;

use crate::config::{artifact_name, ExperimentConfig};
use crate::data;

pub fn run(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;

    let mut dirs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let sets = data::generate_sets(cfg, seed)?;
        let gen_cfg = data::generation_config(cfg, seed);
        let dir = cfg
            .out_dir
            .join(format!("dataset_{}_seed{seed}", artifact_name(cfg.artifact)));
        save_generated(&sets, &gen_cfg, &dir)?;
        println!(
            "wrote {} ({} train / {} val / {} test pairs at {} Hz)",
            dir.display(),
            sets.train.len(),
            sets.val.len(),
            sets.test.len(),
            sets.fs,
        );
        dirs.push(dir);
    }
    Ok(dirs)
}
