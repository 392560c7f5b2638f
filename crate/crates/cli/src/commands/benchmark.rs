//! `benchmark`: the full repetition protocol. For every seed the pair sets
//! are regenerated; every configured method then trains (models only) and
//! evaluates on the test split. Runs are independent jobs writing to unique
//! subdirectories; aggregation afterwards is a single-threaded reduction in
//! config order, so outputs are byte-identical for identical configs.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use eegbench::dataset::GeneratedSets;
use eegbench::dsp::BAND_NAMES;
use eegbench::metrics::{anova_oneway, best_worst, evaluate, Denoiser, EvalReport};

use crate::commands::{pairs_csv, psd_csv, waveform_csv, AGGREGATE_HEADER, METRIC_NAMES};
use crate::config::ExperimentConfig;
use crate::manifest::{RunEntry, RunManifest};
use crate::methods::{train_model, MethodKind};
use crate::{data, fmt_f64, par_map};

/// What one `benchmark` invocation did.
#[derive(Debug)]
pub struct BenchmarkOutcome {
    pub results_dir: PathBuf,
    pub succeeded: usize,
    pub failed: usize,
}

struct RunResult {
    method: &'static str,
    seed: u64,
    report: Option<EvalReport>,
    error: Option<String>,
    outputs: Vec<String>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<BenchmarkOutcome> {
    cfg.validate()?;
    let kinds: Vec<MethodKind> = cfg
        .methods
        .iter()
        .map(|name| MethodKind::parse(name))
        .collect::<Result<_>>()?;

    // Resolve the banks before anything runs: a missing dataset is a
    // configuration problem, not a failed run.
    let source = data::bank_source(cfg)?;

    let out_dir = cfg.out_dir.clone();
    std::fs::create_dir_all(out_dir.join("runs"))
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let mut manifest = RunManifest::new(cfg.clone());
    let mut results: Vec<RunResult> = Vec::new();

    for (seed_pos, &seed) in cfg.seeds.iter().enumerate() {
        // Example waveforms come from the first repetition only.
        let capture_examples = seed_pos == 0;
        let sets = match data::generate_from(cfg, &source, seed) {
            Ok(sets) => sets,
            Err(err) => {
                // Dataset generation sinks every method at this seed.
                let message = format!("dataset generation failed: {err:#}");
                for &kind in &kinds {
                    results.push(RunResult {
                        method: kind.name(),
                        seed,
                        report: None,
                        error: Some(message.clone()),
                        outputs: Vec::new(),
                    });
                }
                continue;
            }
        };

        let sets_ref = &sets;
        let out_ref = &out_dir;
        let seed_results = par_map(kinds.clone(), move |kind| {
            execute_run(cfg, kind, seed, sets_ref, out_ref, capture_examples)
        });
        results.extend(seed_results);
    }

    for r in &results {
        if let Some(err) = &r.error {
            eprintln!("run {}_seed{} failed: {err}", r.method, r.seed);
        }
        manifest.runs.push(RunEntry {
            method: r.method.to_string(),
            seed: r.seed,
            error: r.error.clone(),
            outputs: r.outputs.clone(),
        });
    }

    // Aggregations walk methods in config order and seeds in config order.
    let grouped: Vec<(&'static str, Vec<&EvalReport>)> = kinds
        .iter()
        .map(|kind| {
            let reports = results
                .iter()
                .filter(|r| r.method == kind.name())
                .filter_map(|r| r.report.as_ref())
                .collect();
            (kind.name(), reports)
        })
        .collect();

    write_aggregate(&out_dir.join("aggregate.csv"), cfg, &grouped)?;
    write_anova(&out_dir.join("anova.csv"), cfg, &grouped)?;
    write_band_ratios(&out_dir.join("band_ratios.csv"), &grouped)?;

    manifest.finish();
    manifest.save(&out_dir)?;

    let succeeded = results.iter().filter(|r| r.error.is_none()).count();
    let failed = results.len() - succeeded;
    println!(
        "benchmark finished: {succeeded} runs ok, {failed} failed, results in {}",
        out_dir.display()
    );
    Ok(BenchmarkOutcome {
        results_dir: out_dir,
        succeeded,
        failed,
    })
}

fn execute_run(
    cfg: &ExperimentConfig,
    kind: MethodKind,
    seed: u64,
    sets: &GeneratedSets,
    out_dir: &Path,
    capture_examples: bool,
) -> RunResult {
    match try_run(cfg, kind, seed, sets, out_dir, capture_examples) {
        Ok((report, outputs)) => RunResult {
            method: kind.name(),
            seed,
            report: Some(report),
            error: None,
            outputs,
        },
        Err(err) => RunResult {
            method: kind.name(),
            seed,
            report: None,
            error: Some(format!("{err:#}")),
            outputs: Vec::new(),
        },
    }
}

fn rel(out_dir: &Path, path: &Path) -> String {
    path.strip_prefix(out_dir)
        .unwrap_or(path)
        .to_string_lossy()
        .into_owned()
}

fn try_run(
    cfg: &ExperimentConfig,
    kind: MethodKind,
    seed: u64,
    sets: &GeneratedSets,
    out_dir: &Path,
    capture_examples: bool,
) -> Result<(EvalReport, Vec<String>)> {
    let dir = out_dir
        .join("runs")
        .join(format!("{}_seed{seed}", kind.name()));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut outputs = Vec::new();

    let denoiser: Box<dyn Denoiser> = match kind.architecture() {
        Some(arch) => {
            let (model, record) = train_model(cfg, arch, seed, sets)?;
            let losses = dir.join("losses.csv");
            record.to_csv(&losses)?;
            outputs.push(rel(out_dir, &losses));
            let ckpt = dir.join("checkpoint");
            model.save(&ckpt)?;
            outputs.push(rel(out_dir, &ckpt));
            Box::new(model)
        }
        None => kind.baseline(cfg.artifact).expect("baseline exists"),
    };

    let report = evaluate(denoiser.as_ref(), &sets.test);
    let pairs_path = dir.join("pairs.csv");
    std::fs::write(&pairs_path, pairs_csv(kind.name(), seed, &report))?;
    outputs.push(rel(out_dir, &pairs_path));
    let agg_path = dir.join("aggregates.json");
    std::fs::write(&agg_path, report.aggregates_json()?)?;
    outputs.push(rel(out_dir, &agg_path));

    if capture_examples {
        write_examples(
            &report,
            denoiser.as_ref(),
            sets,
            out_dir,
            kind.name(),
            &mut outputs,
        )?;
    }
    Ok((report, outputs))
}

/// Dump the best and worst test pair (by temporal error) of this run as
/// waveform and PSD series, plus a small JSON locator.
fn write_examples(
    report: &EvalReport,
    denoiser: &dyn Denoiser,
    sets: &GeneratedSets,
    out_dir: &Path,
    method: &str,
    outputs: &mut Vec<String>,
) -> Result<()> {
    // No scored pairs (every denoise failed) means nothing to show.
    let Ok((best, worst)) = best_worst(report) else {
        return Ok(());
    };
    let dir = out_dir.join("best_worst");
    std::fs::create_dir_all(&dir)?;

    let mut locator = serde_json::Map::new();
    for (tag, index) in [("best", best), ("worst", worst)] {
        let pair = &sets.test[index];
        let denoised = denoiser.denoise(&pair.contaminated)?;

        let wave_path = dir.join(format!("{method}_{tag}_waveform.csv"));
        std::fs::write(
            &wave_path,
            waveform_csv(&pair.ground_truth, &pair.contaminated, &denoised),
        )?;
        outputs.push(rel(out_dir, &wave_path));

        let psd_path = dir.join(format!("{method}_{tag}_psd.csv"));
        std::fs::write(
            &psd_path,
            psd_csv(&pair.ground_truth, &pair.contaminated, &denoised)?,
        )?;
        outputs.push(rel(out_dir, &psd_path));

        let record = report
            .records
            .iter()
            .find(|r| r.pair_index == index)
            .expect("best/worst indices come from the records");
        locator.insert(
            tag.to_string(),
            serde_json::json!({
                "pair_index": index,
                "snr_db": record.snr_db,
                "rrmse_temporal": record.rrmse_temporal,
            }),
        );
    }
    let loc_path = dir.join(format!("{method}_examples.json"));
    std::fs::write(&loc_path, serde_json::to_string_pretty(&locator)?)?;
    outputs.push(rel(out_dir, &loc_path));
    Ok(())
}

/// Sorted unique SNR levels of the experiment.
fn sorted_levels(cfg: &ExperimentConfig) -> Vec<f64> {
    let mut levels = cfg.snr_levels_db.clone();
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| a.to_bits() == b.to_bits());
    levels
}

/// Per-repetition means of one metric at one level, in seed order. Means
/// are taken over the same records the per-pair CSVs list, so the aggregate
/// table is consistent with them by construction.
fn run_means(reports: &[&EvalReport], level: f64, metric: usize) -> Vec<f64> {
    reports
        .iter()
        .filter_map(|report| {
            let values: Vec<f64> = report
                .records
                .iter()
                .filter(|r| r.snr_db.to_bits() == level.to_bits())
                .filter_map(|r| match metric {
                    0 => r.rrmse_temporal,
                    1 => r.rrmse_spectral,
                    _ => r.cc,
                })
                .collect();
            (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
        })
        .collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// The headline table: method x SNR rows, mean and spread over repetitions
/// for each metric.
fn write_aggregate(
    path: &Path,
    cfg: &ExperimentConfig,
    grouped: &[(&'static str, Vec<&EvalReport>)],
) -> Result<()> {
    let levels = sorted_levels(cfg);
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for (method, reports) in grouped {
        for &level in &levels {
            out.push_str(&format!("{method},{}", fmt_f64(level)));
            for metric in 0..METRIC_NAMES.len() {
                let (mean, std) = mean_std(&run_means(reports, level, metric));
                out.push_str(&format!(",{},{}", fmt_f64(mean), fmt_f64(std)));
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Pooled per-pair metric values of one method, across repetitions, either
/// at one level or over all levels.
fn pooled_values(reports: &[&EvalReport], metric: usize, level: Option<f64>) -> Vec<f64> {
    let mut values = Vec::new();
    for report in reports {
        for r in &report.records {
            if let Some(level) = level {
                if r.snr_db.to_bits() != level.to_bits() {
                    continue;
                }
            }
            let v = match metric {
                0 => r.rrmse_temporal,
                1 => r.rrmse_spectral,
                _ => r.cc,
            };
            if let Some(v) = v {
                values.push(v);
            }
        }
    }
    values
}

/// One-way ANOVA across methods, per metric: one pooled row over all levels
/// plus one row per level. Cells are NaN when the test is not computable
/// (fewer than two method groups with data, or degenerate variance).
fn write_anova(
    path: &Path,
    cfg: &ExperimentConfig,
    grouped: &[(&'static str, Vec<&EvalReport>)],
) -> Result<()> {
    let levels = sorted_levels(cfg);
    let mut out = String::from("metric,snr_db,f_stat,p_value\n");
    for (metric_idx, metric_name) in METRIC_NAMES.iter().enumerate() {
        let mut scopes: Vec<(String, Option<f64>)> = vec![("all".to_string(), None)];
        scopes.extend(levels.iter().map(|&l| (fmt_f64(l), Some(l))));
        for (label, level) in scopes {
            let groups: Vec<Vec<f64>> = grouped
                .iter()
                .map(|(_, reports)| pooled_values(reports, metric_idx, level))
                .filter(|g| g.len() >= 2)
                .collect();
            let slices: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
            let (f_stat, p_value) = if slices.len() >= 2 {
                anova_oneway(&slices).unwrap_or((f64::NAN, f64::NAN))
            } else {
                (f64::NAN, f64::NAN)
            };
            out.push_str(&format!(
                "{metric_name},{label},{},{}\n",
                fmt_f64(f_stat),
                fmt_f64(p_value)
            ));
        }
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Mean band-power ratios per method (first repetition), for the ground
/// truth, contaminated, and denoised signals. Methods whose sampling rate
/// cannot resolve the full band range contribute no rows.
fn write_band_ratios(path: &Path, grouped: &[(&'static str, Vec<&EvalReport>)]) -> Result<()> {
    let mut out = String::from("method,signal,");
    out.push_str(&BAND_NAMES.join(","));
    out.push_str(",pairs\n");
    for (method, reports) in grouped {
        let Some(table) = reports.first().and_then(|r| r.band_ratios.as_ref()) else {
            continue;
        };
        for (signal, ratios) in [
            ("ground_truth", &table.ground_truth),
            ("contaminated", &table.contaminated),
            ("denoised", &table.denoised),
        ] {
            let cells: Vec<String> = ratios.as_array().iter().map(|&v| fmt_f64(v)).collect();
            out.push_str(&format!(
                "{method},{signal},{},{}\n",
                cells.join(","),
                table.count
            ));
        }
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report_with(method: &str, snr_db: f64, values: &[f64]) -> EvalReport {
        use eegbench::dataset::{
            generate_semisynthetic, synth_surrogate_with, ArtifactType, BankKind, GenerationConfig,
        };
        // Build a tiny real report so the struct fields stay private to
        // core: evaluate an identity method, then overwrite the values.
        let eeg = synth_surrogate_with(BankKind::Eeg, 60, 0, 64, 64).unwrap();
        let eog = synth_surrogate_with(BankKind::Eog, 60, 1, 64, 64).unwrap();
        let mut cfg = GenerationConfig::new(ArtifactType::Ocular, 0);
        cfg.snr_levels_db = vec![snr_db];
        let sets = generate_semisynthetic(&eeg, &eog, &cfg).unwrap();
        let subset = &sets.test[..values.len().min(sets.test.len())];
        let mut report = evaluate(&crate::methods::IdentityBaseline, subset);
        report.method = method.to_string();
        for (r, &v) in report.records.iter_mut().zip(values) {
            r.rrmse_temporal = Some(v);
            r.rrmse_spectral = Some(v + 0.5);
            r.cc = Some(0.9);
        }
        report
    }

    #[test]
    fn aggregate_mean_matches_the_per_pair_values() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::preset(crate::config::Scale::Desk);
        cfg.snr_levels_db = vec![-3.0];

        // Identity temporal error is identical for every pair at one level,
        // so hand-set distinct values instead.
        let a = report_with("filter", -3.0, &[0.4, 0.6]);
        let b = report_with("filter", -3.0, &[0.8, 1.0]);
        let path = dir.path().join("aggregate.csv");
        write_aggregate(&path, &cfg, &[("filter", vec![&a, &b])]).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), AGGREGATE_HEADER);
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "filter");
        let mean: f64 = row[2].parse().unwrap();
        // Mean of run means (0.5, 0.9) equals the grand mean of 4 values.
        assert!((mean - 0.7).abs() < 1e-12);
        let std: f64 = row[3].parse().unwrap();
        assert!((std - 0.2).abs() < 1e-12);
    }

    #[test]
    fn anova_separates_clearly_different_methods() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::preset(crate::config::Scale::Desk);
        cfg.snr_levels_db = vec![-3.0];

        let low = report_with("fcnn", -3.0, &[0.2, 0.21, 0.19, 0.2, 0.22]);
        let high = report_with("filter", -3.0, &[0.9, 0.91, 0.89, 0.9, 0.92]);
        let path = dir.path().join("anova.csv");
        write_anova(&path, &cfg, &[("fcnn", vec![&low]), ("filter", vec![&high])]).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let pooled: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(pooled[0], "rrmse_temporal");
        assert_eq!(pooled[1], "all");
        let f: f64 = pooled[2].parse().unwrap();
        let p: f64 = pooled[3].parse().unwrap();
        assert!(f > 100.0, "F = {f}");
        assert!(p < 1e-6, "p = {p}");
    }
}
