//! `report`: turn a benchmark results directory into plot-ready series:
//! consolidated loss curves, metric-versus-SNR tables, per-method box plot
//! summaries, copies of the example waveforms, and optional SVG renderings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::commands::{quantile_sorted, AGGREGATE_HEADER, METRIC_NAMES, PAIRS_HEADER};
use crate::manifest::RunManifest;
use crate::methods::MethodKind;
use crate::plots::{box_chart, line_chart, BoxStats, Series};
use crate::{fmt_f64, par_map};

pub fn run(results_dir: &Path, svg: bool) -> Result<PathBuf> {
    let manifest = RunManifest::load(results_dir)?;
    let report_dir = results_dir.join("report");
    std::fs::create_dir_all(&report_dir)
        .with_context(|| format!("creating {}", report_dir.display()))?;

    let loss_series = write_loss_curves(results_dir, &manifest, &report_dir)?;
    let metric_series = write_metric_vs_snr(results_dir, &manifest, &report_dir)?;
    let box_stats = write_boxplot(results_dir, &manifest, &report_dir)?;
    copy_examples(results_dir, &report_dir)?;

    if svg {
        render_svgs(&report_dir, &loss_series, &metric_series, &box_stats)?;
    }
    println!("report written to {}", report_dir.display());
    Ok(report_dir)
}

fn read_csv(path: &Path, expected_header: &str) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| anyhow::anyhow!("{}: empty file", path.display()))?;
    if header != expected_header {
        return Err(anyhow::anyhow!(
            "{}: unexpected header '{header}'",
            path.display()
        ));
    }
    Ok(lines
        .map(|line| line.split(',').map(str::to_string).collect())
        .collect())
}

fn parse_cell(path: &Path, cell: &str) -> Result<f64> {
    cell.parse::<f64>()
        .map_err(|_| anyhow::anyhow!("{}: malformed number '{cell}'", path.display()))
}

/// Successful model runs, in manifest order.
fn model_runs(manifest: &RunManifest) -> Vec<(String, u64)> {
    manifest
        .runs
        .iter()
        .filter(|r| r.succeeded())
        .filter(|r| {
            MethodKind::parse(&r.method)
                .map(|k| k.architecture().is_some())
                .unwrap_or(false)
        })
        .map(|r| (r.method.clone(), r.seed))
        .collect()
}

/// One consolidated `method,seed,epoch,train_loss,val_loss` file, plus the
/// series for plotting.
fn write_loss_curves(
    results_dir: &Path,
    manifest: &RunManifest,
    report_dir: &Path,
) -> Result<Vec<Series>> {
    let mut out = String::from("method,seed,epoch,train_loss,val_loss\n");
    let mut series = Vec::new();
    for (method, seed) in model_runs(manifest) {
        let path = results_dir
            .join("runs")
            .join(format!("{method}_seed{seed}"))
            .join("losses.csv");
        let rows = read_csv(&path, "epoch,train_loss,val_loss")?;
        let mut points = Vec::with_capacity(rows.len());
        for row in &rows {
            if row.len() != 3 {
                return Err(anyhow::anyhow!("{}: malformed row", path.display()));
            }
            let epoch = parse_cell(&path, &row[0])?;
            let train = parse_cell(&path, &row[1])?;
            out.push_str(&format!("{method},{seed},{},{},{}\n", row[0], row[1], row[2]));
            points.push((epoch, train));
        }
        series.push(Series {
            label: format!("{method} seed {seed}"),
            points,
        });
    }
    std::fs::write(report_dir.join("loss_curves.csv"), out)?;
    Ok(series)
}

/// Reshape the aggregate table into per-metric long form, methods in config
/// order and SNR ascending, ready to plot one line per method.
fn write_metric_vs_snr(
    results_dir: &Path,
    manifest: &RunManifest,
    report_dir: &Path,
) -> Result<BTreeMap<String, Vec<Series>>> {
    let path = results_dir.join("aggregate.csv");
    let rows = read_csv(&path, AGGREGATE_HEADER)?;

    let mut out = String::from("metric,method,snr_db,mean,std\n");
    let mut charts: BTreeMap<String, Vec<Series>> = BTreeMap::new();
    for (metric_idx, metric_name) in METRIC_NAMES.iter().enumerate() {
        let mean_col = 2 + 2 * metric_idx;
        for method in &manifest.config.methods {
            let mut points = Vec::new();
            for row in &rows {
                if row.len() != 8 || &row[0] != method {
                    continue;
                }
                let snr = parse_cell(&path, &row[1])?;
                let mean = parse_cell(&path, &row[mean_col])?;
                out.push_str(&format!(
                    "{metric_name},{method},{},{},{}\n",
                    row[1],
                    row[mean_col],
                    row[mean_col + 1]
                ));
                points.push((snr, mean));
            }
            if !points.is_empty() {
                charts
                    .entry(metric_name.to_string())
                    .or_default()
                    .push(Series {
                        label: method.clone(),
                        points,
                    });
            }
        }
    }
    std::fs::write(report_dir.join("metric_vs_snr.csv"), out)?;
    Ok(charts)
}

/// Five-number summaries per (method, metric) over every scored pair of
/// every repetition, pooled across SNR levels.
fn write_boxplot(
    results_dir: &Path,
    manifest: &RunManifest,
    report_dir: &Path,
) -> Result<BTreeMap<String, Vec<BoxStats>>> {
    // Pool per-pair values from each successful run's pairs.csv.
    let runs: Vec<(String, u64)> = manifest
        .runs
        .iter()
        .filter(|r| r.succeeded())
        .map(|r| (r.method.clone(), r.seed))
        .collect();
    let parsed: Vec<Result<(String, Vec<[Option<f64>; 3]>)>> = par_map(runs, |(method, seed)| {
        let path = results_dir
            .join("runs")
            .join(format!("{method}_seed{seed}"))
            .join("pairs.csv");
        let rows = read_csv(&path, PAIRS_HEADER)?;
        let mut values = Vec::with_capacity(rows.len());
        for row in &rows {
            if row.len() != 7 {
                return Err(anyhow::anyhow!("{}: malformed row", path.display()));
            }
            let mut triple = [None; 3];
            for (slot, cell) in triple.iter_mut().zip(&row[4..7]) {
                if !cell.is_empty() {
                    *slot = Some(parse_cell(&path, cell)?);
                }
            }
            values.push(triple);
        }
        Ok((method, values))
    });

    let mut pooled: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for item in parsed {
        let (method, rows) = item?;
        for triple in rows {
            for (metric_idx, v) in triple.iter().enumerate() {
                if let Some(v) = v {
                    pooled.entry((method.clone(), metric_idx)).or_default().push(*v);
                }
            }
        }
    }

    let mut out = String::from("method,metric,min,q1,median,q3,max\n");
    let mut charts: BTreeMap<String, Vec<BoxStats>> = BTreeMap::new();
    for method in &manifest.config.methods {
        for (metric_idx, metric_name) in METRIC_NAMES.iter().enumerate() {
            let Some(values) = pooled.get_mut(&(method.clone(), metric_idx)) else {
                continue;
            };
            values.sort_by(f64::total_cmp);
            let stats = BoxStats {
                label: method.clone(),
                min: values[0],
                q1: quantile_sorted(values, 0.25),
                median: quantile_sorted(values, 0.5),
                q3: quantile_sorted(values, 0.75),
                max: values[values.len() - 1],
            };
            out.push_str(&format!(
                "{method},{metric_name},{},{},{},{},{}\n",
                fmt_f64(stats.min),
                fmt_f64(stats.q1),
                fmt_f64(stats.median),
                fmt_f64(stats.q3),
                fmt_f64(stats.max),
            ));
            charts.entry(metric_name.to_string()).or_default().push(stats);
        }
    }
    std::fs::write(report_dir.join("boxplot.csv"), out)?;
    Ok(charts)
}

/// Bring the example waveform/PSD series along so the report directory is
/// self-contained.
fn copy_examples(results_dir: &Path, report_dir: &Path) -> Result<()> {
    let src = results_dir.join("best_worst");
    if !src.is_dir() {
        return Ok(());
    }
    let dst = report_dir.join("best_worst");
    std::fs::create_dir_all(&dst)?;
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&src)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    for path in entries {
        let name = path.file_name().expect("files have names");
        std::fs::copy(&path, dst.join(name))
            .with_context(|| format!("copying {}", path.display()))?;
    }
    Ok(())
}

fn render_svgs(
    report_dir: &Path,
    loss_series: &[Series],
    metric_series: &BTreeMap<String, Vec<Series>>,
    box_stats: &BTreeMap<String, Vec<BoxStats>>,
) -> Result<()> {
    if !loss_series.is_empty() {
        let svg = line_chart("training loss", "epoch", "mse", loss_series);
        std::fs::write(report_dir.join("loss_curves.svg"), svg)?;
    }
    for (metric, series) in metric_series {
        let svg = line_chart(
            &format!("{metric} vs SNR"),
            "snr (dB)",
            metric,
            series,
        );
        std::fs::write(report_dir.join(format!("{metric}_vs_snr.svg")), svg)?;
    }
    for (metric, boxes) in box_stats {
        let svg = box_chart(&format!("{metric} spread"), metric, boxes);
        std::fs::write(report_dir.join(format!("boxplot_{metric}.svg")), svg)?;
    }
    Ok(())
}
