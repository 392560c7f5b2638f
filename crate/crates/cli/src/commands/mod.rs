//! Subcommand implementations plus the CSV formats they share.

pub mod benchmark;
pub mod evaluate;
pub mod generate;
pub mod report;
pub mod train;

use anyhow::Result;
use eegbench::dsp::psd;
use eegbench::metrics::EvalReport;
use eegbench::signal::Segment;

use crate::fmt_f64;

/// Per-pair CSV columns, fixed across every command.
pub const PAIRS_HEADER: &str = "method,seed,snr_db,pair_index,rrmse_t,rrmse_s,cc";

/// Aggregate CSV columns: one row per (method, SNR level).
pub const AGGREGATE_HEADER: &str = "method,snr_db,rrmse_temporal_mean,rrmse_temporal_std,\
rrmse_spectral_mean,rrmse_spectral_std,cc_mean,cc_std";

/// Metric column order used by aggregate, ANOVA, and boxplot files.
pub const METRIC_NAMES: [&str; 3] = ["rrmse_temporal", "rrmse_spectral", "cc"];

fn cell(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Render one run's per-pair records with the method and seed stamped on
/// every row.
pub fn pairs_csv(method: &str, seed: u64, report: &EvalReport) -> String {
    let mut out = String::from(PAIRS_HEADER);
    out.push('\n');
    for r in &report.records {
        out.push_str(&format!(
            "{method},{seed},{},{},{},{},{}\n",
            fmt_f64(r.snr_db),
            r.pair_index,
            cell(r.rrmse_temporal),
            cell(r.rrmse_spectral),
            cell(r.cc),
        ));
    }
    out
}

/// Time series of the three signals of one example pair.
pub fn waveform_csv(ground_truth: &Segment, contaminated: &Segment, denoised: &Segment) -> String {
    let fs = ground_truth.fs() as f64;
    let mut out = String::from("time_s,ground_truth,contaminated,denoised\n");
    for i in 0..ground_truth.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(i as f64 / fs),
            fmt_f64(ground_truth.samples()[i]),
            fmt_f64(contaminated.samples()[i]),
            fmt_f64(denoised.samples()[i]),
        ));
    }
    out
}

/// Power spectral densities of the three signals of one example pair.
pub fn psd_csv(
    ground_truth: &Segment,
    contaminated: &Segment,
    denoised: &Segment,
) -> Result<String> {
    let truth = psd(ground_truth)?;
    let cont = psd(contaminated)?;
    let den = psd(denoised)?;
    let mut out = String::from("freq_hz,ground_truth,contaminated,denoised\n");
    for i in 0..truth.freqs.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(truth.freqs[i]),
            fmt_f64(truth.power[i]),
            fmt_f64(cont.power[i]),
            fmt_f64(den.power[i]),
        ));
    }
    Ok(out)
}

/// Linear-interpolation quantile on a sorted slice, the same convention as
/// mainstream numeric libraries' default.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty slice");
    assert!((0.0..=1.0).contains(&p), "quantile fraction out of range");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[n - 1]
    }
}
