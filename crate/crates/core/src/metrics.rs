//! Denoising quality metrics and statistical reporting.
//!
//! Per-pair measures (relative RMSE in time and in spectrum, Pearson
//! correlation), aggregation per SNR level, band-power tables, best/worst
//! pair selection, one-way ANOVA, and a Spearman rank helper for trend
//! checks.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::dataset::SemiSyntheticPair;
use crate::dsp::{band_power_ratios, psd, BandPowerRatios};
use crate::error::{Error, Result};
use crate::par;
use crate::signal::Segment;

/// Anything that maps a contaminated segment to a cleaned one.
///
/// `Sync` so [`evaluate`] can fan pairs out across threads against a shared
/// instance.
pub trait Denoiser: Sync {
    fn name(&self) -> &str;
    fn denoise(&self, contaminated: &Segment) -> Result<Segment>;
}

/// Spectra are compared only up to this frequency...
const SPECTRAL_CAP_HZ: f64 = 120.0;
/// ...provided the sampling rate actually resolves it; below this rate the
/// full one-sided range is used instead.
const SPECTRAL_CAP_MIN_FS: u32 = 240;

fn check_same_grid(op: &str, a: &Segment, b: &Segment) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(
            op,
            format!("segment lengths differ: {} vs {}", a.len(), b.len()),
        ));
    }
    if a.fs() != b.fs() {
        return Err(Error::shape(
            op,
            format!("sampling rates differ: {} vs {} Hz", a.fs(), b.fs()),
        ));
    }
    Ok(())
}

/// RMS of (denoised - ground truth) over RMS of ground truth.
pub fn rrmse_temporal(denoised: &Segment, ground_truth: &Segment) -> Result<f64> {
    check_same_grid("rrmse_temporal", denoised, ground_truth)?;
    let truth_rms = ground_truth.rms();
    if truth_rms == 0.0 {
        return Err(Error::DegenerateSignal(
            "ground truth has zero RMS".into(),
        ));
    }
    let n = denoised.len() as f64;
    let diff_mean_sq = denoised
        .samples()
        .iter()
        .zip(ground_truth.samples())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    Ok(diff_mean_sq.sqrt() / truth_rms)
}

/// One-sided periodogram bins, truncated at the comparison cap when the
/// sampling rate resolves frequencies beyond it.
fn capped_psd(segment: &Segment) -> Result<Vec<f64>> {
    let estimate = psd(segment)?;
    let mut power = estimate.power;
    if segment.fs() >= SPECTRAL_CAP_MIN_FS {
        let keep = estimate
            .freqs
            .iter()
            .take_while(|&&f| f <= SPECTRAL_CAP_HZ)
            .count();
        power.truncate(keep);
    }
    Ok(power)
}

/// RMS of the PSD difference over RMS of the ground-truth PSD.
///
/// Periodogram magnitudes are phase-blind, so a pure delay scores near zero
/// here while scoring high temporally.
pub fn rrmse_spectral(denoised: &Segment, ground_truth: &Segment) -> Result<f64> {
    check_same_grid("rrmse_spectral", denoised, ground_truth)?;
    let den = capped_psd(denoised)?;
    let truth = capped_psd(ground_truth)?;
    let truth_mean_sq = truth.iter().map(|p| p * p).sum::<f64>() / truth.len() as f64;
    if truth_mean_sq == 0.0 {
        return Err(Error::DegenerateSignal(
            "ground-truth PSD is identically zero".into(),
        ));
    }
    let diff_mean_sq = den
        .iter()
        .zip(&truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / truth.len() as f64;
    Ok((diff_mean_sq / truth_mean_sq).sqrt())
}

fn pearson(a: &[f64], b: &[f64], op: &str) -> Result<f64> {
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in a.iter().zip(b) {
        let da = x - mean_a;
        let db = y - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(Error::DegenerateSignal(format!(
            "{op} needs nonconstant inputs"
        )));
    }
    Ok((cov / (var_a.sqrt() * var_b.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation (population covariance over population deviations).
pub fn cc(denoised: &Segment, ground_truth: &Segment) -> Result<f64> {
    check_same_grid("cc", denoised, ground_truth)?;
    pearson(denoised.samples(), ground_truth.samples(), "correlation")
}

/// Metrics for one evaluated pair. A metric cell is `None` when that metric
/// alone could not be computed (the cause lands in the report's failures).
#[derive(Debug, Clone, Serialize)]
pub struct PairRecord {
    pub pair_index: usize,
    pub snr_db: f64,
    pub rrmse_temporal: Option<f64>,
    pub rrmse_spectral: Option<f64>,
    pub cc: Option<f64>,
}

/// Why a pair, or a single metric of a pair, was skipped.
#[derive(Debug, Clone, Serialize)]
pub struct FailureNote {
    pub pair_index: usize,
    pub snr_db: f64,
    /// "denoise" when the method itself failed, else the metric name.
    pub stage: String,
    pub message: String,
}

/// Mean and population standard deviation over the pairs where a metric was
/// computable; NaN when no pair qualified.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MetricSummary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

fn summarize(values: &[f64]) -> MetricSummary {
    if values.is_empty() {
        return MetricSummary {
            count: 0,
            mean: f64::NAN,
            std: f64::NAN,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MetricSummary {
        count: values.len(),
        mean,
        std: var.sqrt(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SnrAggregate {
    pub snr_db: f64,
    pub rrmse_temporal: MetricSummary,
    pub rrmse_spectral: MetricSummary,
    pub cc: MetricSummary,
}

/// Mean band-power ratios across pairs, for the three signals of interest.
#[derive(Debug, Clone, Serialize)]
pub struct BandRatioTable {
    /// Pairs that contributed (all three signals yielded ratios).
    pub count: usize,
    pub ground_truth: BandPowerRatios,
    pub contaminated: BandPowerRatios,
    pub denoised: BandPowerRatios,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub method: String,
    /// One record per pair whose denoise call succeeded, ascending index.
    pub records: Vec<PairRecord>,
    pub failures: Vec<FailureNote>,
    /// Aggregates in ascending SNR order.
    pub per_snr: Vec<SnrAggregate>,
    /// Present when the sampling rate supports band analysis and at least
    /// one pair produced ratios for all three signals.
    pub band_ratios: Option<BandRatioTable>,
}

enum Outcome {
    Failed(String),
    Done {
        rrmse_t: std::result::Result<f64, String>,
        rrmse_s: std::result::Result<f64, String>,
        cc: std::result::Result<f64, String>,
        bands: Option<[BandPowerRatios; 3]>,
    },
}

fn band_triple(
    pair: &SemiSyntheticPair,
    denoised: &Segment,
) -> Option<[BandPowerRatios; 3]> {
    let truth = band_power_ratios(&pair.ground_truth).ok()?;
    let cont = band_power_ratios(&pair.contaminated).ok()?;
    let den = band_power_ratios(denoised).ok()?;
    Some([truth, cont, den])
}

/// Run `method` over every pair and aggregate.
///
/// Denoise failures mark the pair failed; a failure in one metric leaves the
/// others standing. Pairs are processed concurrently but assembled in index
/// order, so the report is deterministic.
pub fn evaluate(method: &dyn Denoiser, pairs: &[SemiSyntheticPair]) -> EvalReport {
    let fs_supports_bands = pairs.first().is_some_and(|p| p.ground_truth.fs() >= 160);

    let outcomes = par::map_slice(pairs, |pair| {
        let denoised = match method.denoise(&pair.contaminated) {
            Ok(d) => d,
            Err(e) => return Outcome::Failed(e.to_string()),
        };
        Outcome::Done {
            rrmse_t: rrmse_temporal(&denoised, &pair.ground_truth).map_err(|e| e.to_string()),
            rrmse_s: rrmse_spectral(&denoised, &pair.ground_truth).map_err(|e| e.to_string()),
            cc: cc(&denoised, &pair.ground_truth).map_err(|e| e.to_string()),
            bands: if fs_supports_bands {
                band_triple(pair, &denoised)
            } else {
                None
            },
        }
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut band_sums = [[0.0f64; 5]; 3];
    let mut band_count = 0usize;

    for (pair_index, (outcome, pair)) in outcomes.into_iter().zip(pairs).enumerate() {
        let snr_db = pair.snr_db;
        match outcome {
            Outcome::Failed(message) => failures.push(FailureNote {
                pair_index,
                snr_db,
                stage: "denoise".into(),
                message,
            }),
            Outcome::Done {
                rrmse_t,
                rrmse_s,
                cc,
                bands,
            } => {
                let mut keep = |name: &str, r: std::result::Result<f64, String>| match r {
                    Ok(v) => Some(v),
                    Err(message) => {
                        failures.push(FailureNote {
                            pair_index,
                            snr_db,
                            stage: name.into(),
                            message,
                        });
                        None
                    }
                };
                records.push(PairRecord {
                    pair_index,
                    snr_db,
                    rrmse_temporal: keep("rrmse_temporal", rrmse_t),
                    rrmse_spectral: keep("rrmse_spectral", rrmse_s),
                    cc: keep("cc", cc),
                });
                if let Some(triple) = bands {
                    for (sum, ratios) in band_sums.iter_mut().zip(&triple) {
                        for (s, v) in sum.iter_mut().zip(ratios.as_array()) {
                            *s += v;
                        }
                    }
                    band_count += 1;
                }
            }
        }
    }

    let mut groups: BTreeMap<i64, Vec<&PairRecord>> = BTreeMap::new();
    for r in &records {
        groups.entry(snr_key(r.snr_db)).or_default().push(r);
    }
    let per_snr = groups
        .into_values()
        .map(|rs| SnrAggregate {
            snr_db: rs[0].snr_db,
            rrmse_temporal: summarize(
                &rs.iter().filter_map(|r| r.rrmse_temporal).collect::<Vec<_>>(),
            ),
            rrmse_spectral: summarize(
                &rs.iter().filter_map(|r| r.rrmse_spectral).collect::<Vec<_>>(),
            ),
            cc: summarize(&rs.iter().filter_map(|r| r.cc).collect::<Vec<_>>()),
        })
        .collect();

    let band_ratios = (band_count > 0).then(|| BandRatioTable {
        count: band_count,
        ground_truth: mean_ratios(band_sums[0], band_count),
        contaminated: mean_ratios(band_sums[1], band_count),
        denoised: mean_ratios(band_sums[2], band_count),
    });

    EvalReport {
        method: method.name().to_string(),
        records,
        failures,
        per_snr,
        band_ratios,
    }
}

/// SNR levels are grouped on a microdecibel grid so exact float identity is
/// not load-bearing.
fn snr_key(snr_db: f64) -> i64 {
    (snr_db * 1e6).round() as i64
}

fn mean_ratios(sum: [f64; 5], count: usize) -> BandPowerRatios {
    let n = count as f64;
    BandPowerRatios {
        delta: sum[0] / n,
        theta: sum[1] / n,
        alpha: sum[2] / n,
        beta: sum[3] / n,
        gamma: sum[4] / n,
    }
}

impl EvalReport {
    /// One CSV row per attempted pair, ascending index. Metric cells are
    /// empty when unavailable; status is ok, partial, or failed.
    pub fn pairs_csv(&self) -> String {
        let mut rows: BTreeMap<usize, String> = BTreeMap::new();
        for r in &self.records {
            let cells = [r.rrmse_temporal, r.rrmse_spectral, r.cc];
            let status = if cells.iter().all(Option::is_some) {
                "ok"
            } else {
                "partial"
            };
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            rows.insert(
                r.pair_index,
                format!(
                    "{},{},{},{},{},{}",
                    r.pair_index,
                    r.snr_db,
                    status,
                    fmt(r.rrmse_temporal),
                    fmt(r.rrmse_spectral),
                    fmt(r.cc)
                ),
            );
        }
        for f in &self.failures {
            if f.stage == "denoise" {
                rows.insert(
                    f.pair_index,
                    format!("{},{},failed,,,", f.pair_index, f.snr_db),
                );
            }
        }
        let mut out = String::from("pair_index,snr_db,status,rrmse_temporal,rrmse_spectral,cc\n");
        for row in rows.values() {
            out.push_str(row);
            out.push('\n');
        }
        out
    }

    /// Aggregate view (method, per-SNR summaries, band table, failure count)
    /// as pretty JSON.
    pub fn aggregates_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Aggregates<'a> {
            method: &'a str,
            pairs_evaluated: usize,
            failures: usize,
            per_snr: &'a [SnrAggregate],
            band_ratios: &'a Option<BandRatioTable>,
        }
        serde_json::to_string_pretty(&Aggregates {
            method: &self.method,
            pairs_evaluated: self.records.len(),
            failures: self.failures.len(),
            per_snr: &self.per_snr,
            band_ratios: &self.band_ratios,
        })
        .map_err(|e| Error::Format(format!("aggregate JSON: {e}")))
    }
}

/// Indices of the pairs with the lowest and highest temporal RRMSE.
/// Ties go to the lower pair index.
pub fn best_worst(report: &EvalReport) -> Result<(usize, usize)> {
    let mut best: Option<(usize, f64)> = None;
    let mut worst: Option<(usize, f64)> = None;
    for r in &report.records {
        let Some(rt) = r.rrmse_temporal else { continue };
        if best.is_none_or(|(_, v)| rt < v) {
            best = Some((r.pair_index, rt));
        }
        if worst.is_none_or(|(_, v)| rt > v) {
            worst = Some((r.pair_index, rt));
        }
    }
    match (best, worst) {
        (Some((b, _)), Some((w, _))) => Ok((b, w)),
        _ => Err(Error::InvalidInput(
            "no successfully scored pairs to rank".into(),
        )),
    }
}

/// One-way ANOVA: F statistic and its upper-tail p-value.
pub fn anova_oneway(groups: &[&[f64]]) -> Result<(f64, f64)> {
    if groups.len() < 2 {
        return Err(Error::InvalidInput(
            "ANOVA needs at least two groups".into(),
        ));
    }
    for g in groups {
        if g.len() < 2 {
            return Err(Error::InvalidInput(
                "each ANOVA group needs at least two values".into(),
            ));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite value in ANOVA group".into()));
        }
    }
    let n_total: usize = groups.iter().map(|g| g.len()).sum();
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n_total as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        ss_between += g.len() as f64 * (mean - grand) * (mean - grand);
        ss_within += g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    }
    if ss_within <= 0.0 {
        return Err(Error::InvalidInput(
            "zero within-group variance; F statistic undefined".into(),
        ));
    }
    let df_between = (groups.len() - 1) as f64;
    let df_within = (n_total - groups.len()) as f64;
    let f_stat = (ss_between / df_between) / (ss_within / df_within);
    let dist = FisherSnedecor::new(df_between, df_within)
        .map_err(|e| Error::Numeric(format!("F distribution: {e}")))?;
    Ok((f_stat, dist.sf(f_stat)))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::shape(
            "spearman",
            format!("lengths differ: {} vs {}", xs.len(), ys.len()),
        ));
    }
    if xs.len() < 2 {
        return Err(Error::InvalidInput(
            "rank correlation needs at least two points".into(),
        ));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in rank input".into()));
    }
    pearson(&ranks(xs), &ranks(ys), "rank correlation")
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // 1-based rank averaged over the tied run
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sine(freq: f64, fs: u32, len: usize) -> Segment {
        let samples = (0..len)
            .map(|i| (2.0 * PI * freq * i as f64 / fs as f64).sin())
            .collect();
        Segment::new(samples, fs).unwrap()
    }

    fn zeros_like(s: &Segment) -> Segment {
        Segment::new(vec![0.0; s.len()], s.fs()).unwrap()
    }

    #[test]
    fn temporal_identity_zero_and_scaling() {
        let x = sine(10.0, 256, 512);
        assert!(rrmse_temporal(&x, &x).unwrap() < 1e-15);
        assert!((rrmse_temporal(&zeros_like(&x), &x).unwrap() - 1.0).abs() < 1e-12);
        let doubled = Segment::new(x.samples().iter().map(|v| 2.0 * v).collect(), 256).unwrap();
        assert!((rrmse_temporal(&doubled, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn temporal_rejects_zero_truth_and_mismatch() {
        let x = sine(10.0, 256, 512);
        assert!(rrmse_temporal(&x, &zeros_like(&x)).is_err());
        let short = sine(10.0, 256, 256);
        assert!(rrmse_temporal(&short, &x).is_err());
    }

    #[test]
    fn scale_invariance_of_both_rrmse() {
        let truth = sine(10.0, 256, 512);
        let den = Segment::new(
            truth
                .samples()
                .iter()
                .enumerate()
                .map(|(i, v)| v + 0.1 * (2.0 * PI * 30.0 * i as f64 / 256.0).sin())
                .collect(),
            256,
        )
        .unwrap();
        let s = 3.7;
        let truth_s = Segment::new(truth.samples().iter().map(|v| s * v).collect(), 256).unwrap();
        let den_s = Segment::new(den.samples().iter().map(|v| s * v).collect(), 256).unwrap();
        let t = rrmse_temporal(&den, &truth).unwrap();
        let t_s = rrmse_temporal(&den_s, &truth_s).unwrap();
        assert!((t - t_s).abs() < 1e-12);
        let f = rrmse_spectral(&den, &truth).unwrap();
        let f_s = rrmse_spectral(&den_s, &truth_s).unwrap();
        assert!((f - f_s).abs() < 1e-9, "{f} vs {f_s}");
    }

    #[test]
    fn spectral_blind_to_delay_temporal_is_not() {
        // 16 Hz over 512 samples at 256 Hz is exactly 32 periods, so a
        // circular quarter-period shift is a pure delay with an identical
        // periodogram.
        let fs = 256;
        let len = 512;
        let x = sine(16.0, fs, len);
        let shift = (fs as usize) / (4 * 16);
        let shifted: Vec<f64> = (0..len)
            .map(|i| x.samples()[(i + shift) % len])
            .collect();
        let shifted = Segment::new(shifted, fs).unwrap();
        assert!(rrmse_spectral(&shifted, &x).unwrap() < 1e-9);
        assert!(rrmse_temporal(&shifted, &x).unwrap() > 0.5);
    }

    #[test]
    fn spectral_zero_output_scores_one() {
        let x = sine(10.0, 256, 512);
        assert!((rrmse_spectral(&zeros_like(&x), &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_cap_ignores_content_above_120_hz_when_resolvable() {
        let fs = 512;
        let len = 1024;
        let truth = sine(10.0, fs, len);
        let with_hf: Vec<f64> = truth
            .samples()
            .iter()
            .enumerate()
            .map(|(i, v)| v + 0.5 * (2.0 * PI * 150.0 * i as f64 / fs as f64).sin())
            .collect();
        let with_hf = Segment::new(with_hf, fs).unwrap();
        // 150 Hz sits above the cap: spectrally invisible at fs 512
        assert!(rrmse_spectral(&with_hf, &truth).unwrap() < 1e-9);

        // at fs 160 the cap is inactive and a 60 Hz tone is fully visible
        let fs = 160;
        let truth = sine(10.0, fs, len);
        let with_tone: Vec<f64> = truth
            .samples()
            .iter()
            .enumerate()
            .map(|(i, v)| v + 0.5 * (2.0 * PI * 60.0 * i as f64 / fs as f64).sin())
            .collect();
        let with_tone = Segment::new(with_tone, fs).unwrap();
        assert!(rrmse_spectral(&with_tone, &truth).unwrap() > 0.1);
    }

    #[test]
    fn cc_identity_flip_and_affine() {
        let x = sine(10.0, 256, 512);
        assert!((cc(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let neg = Segment::new(x.samples().iter().map(|v| -v).collect(), 256).unwrap();
        assert!((cc(&neg, &x).unwrap() + 1.0).abs() < 1e-12);
        let affine =
            Segment::new(x.samples().iter().map(|v| 3.0 * v + 7.0).collect(), 256).unwrap();
        assert!((cc(&affine, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cc_of_independent_noise_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 512;
        let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let a = Segment::new(a, 256).unwrap();
        let b = Segment::new(b, 256).unwrap();
        assert!(cc(&a, &b).unwrap().abs() < 0.15);
    }

    #[test]
    fn cc_rejects_constant_input() {
        let x = sine(10.0, 256, 512);
        let flat = Segment::new(vec![1.0; 512], 256).unwrap();
        assert!(cc(&flat, &x).is_err());
    }

    struct Identity;
    impl Denoiser for Identity {
        fn name(&self) -> &str {
            "identity"
        }
        fn denoise(&self, contaminated: &Segment) -> Result<Segment> {
            Ok(contaminated.clone())
        }
    }

    struct ZeroOut;
    impl Denoiser for ZeroOut {
        fn name(&self) -> &str {
            "zero"
        }
        fn denoise(&self, contaminated: &Segment) -> Result<Segment> {
            Ok(zeros_like(contaminated))
        }
    }

    struct AlwaysFails;
    impl Denoiser for AlwaysFails {
        fn name(&self) -> &str {
            "broken"
        }
        fn denoise(&self, _: &Segment) -> Result<Segment> {
            Err(Error::InvalidInput("nope".into()))
        }
    }

    fn toy_pairs() -> Vec<SemiSyntheticPair> {
        // clean pairs (contaminated == truth) at two SNR labels
        let mut pairs = Vec::new();
        for (i, snr_db) in [(-7.0), (-7.0), (2.0), (2.0)].into_iter().enumerate() {
            let truth = sine(8.0 + i as f64, 256, 512);
            pairs.push(SemiSyntheticPair {
                ground_truth: truth.clone(),
                contaminated: truth,
                noise_scale: 1.0,
                snr_db,
                contaminated_std: 1.0,
                base_index: i,
                artifact_index: i,
            });
        }
        pairs
    }

    #[test]
    fn evaluate_identity_method_is_perfect() {
        let pairs = toy_pairs();
        let report = evaluate(&Identity, &pairs);
        assert_eq!(report.records.len(), 4);
        assert!(report.failures.is_empty());
        for r in &report.records {
            assert!(r.rrmse_temporal.unwrap() < 1e-12);
            assert!(r.rrmse_spectral.unwrap() < 1e-9);
            assert!((r.cc.unwrap() - 1.0).abs() < 1e-12);
        }
        // ascending SNR order
        assert_eq!(report.per_snr.len(), 2);
        assert_eq!(report.per_snr[0].snr_db, -7.0);
        assert_eq!(report.per_snr[1].snr_db, 2.0);
        // identical clean signals: band table rows match each other
        let table = report.band_ratios.as_ref().unwrap();
        assert_eq!(table.count, 4);
        assert_eq!(table.ground_truth.as_array(), table.denoised.as_array());
    }

    #[test]
    fn evaluate_zero_method_keeps_rrmse_despite_cc_failure() {
        let pairs = toy_pairs();
        let report = evaluate(&ZeroOut, &pairs);
        assert_eq!(report.records.len(), 4);
        for agg in &report.per_snr {
            assert!((agg.rrmse_temporal.mean - 1.0).abs() < 1e-12);
            assert_eq!(agg.rrmse_temporal.count, 2);
            // zero output is constant: correlation cell empty
            assert_eq!(agg.cc.count, 0);
        }
        assert!(report.failures.iter().all(|f| f.stage == "cc"));
        assert_eq!(report.failures.len(), 4);
        // zero output has no band power either
        assert!(report.band_ratios.is_none());
    }

    #[test]
    fn evaluate_records_denoise_failures_without_dying() {
        let pairs = toy_pairs();
        let report = evaluate(&AlwaysFails, &pairs);
        assert!(report.records.is_empty());
        assert_eq!(report.failures.len(), 4);
        assert!(report.failures.iter().all(|f| f.stage == "denoise"));
        assert!(report.per_snr.is_empty());
        assert!(best_worst(&report).is_err());
    }

    #[test]
    fn csv_is_deterministic_and_complete() {
        let pairs = toy_pairs();
        let report = evaluate(&Identity, &pairs);
        let a = report.pairs_csv();
        let b = report.pairs_csv();
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 5);
        assert!(a.starts_with("pair_index,snr_db,status,"));
        let json = report.aggregates_json().unwrap();
        assert!(json.contains("\"method\": \"identity\""));
    }

    #[test]
    fn best_worst_picks_extremes_with_tie_to_lower_index() {
        let mk = |rt: f64, idx: usize| PairRecord {
            pair_index: idx,
            snr_db: 0.0,
            rrmse_temporal: Some(rt),
            rrmse_spectral: Some(rt),
            cc: Some(0.5),
        };
        let report = EvalReport {
            method: "stub".into(),
            records: vec![mk(0.9, 0), mk(0.2, 1), mk(0.2, 2), mk(0.9, 3)],
            failures: vec![],
            per_snr: vec![],
            band_ratios: None,
        };
        assert_eq!(best_worst(&report).unwrap(), (1, 0));
    }

    #[test]
    fn single_pair_is_both_best_and_worst() {
        let report = EvalReport {
            method: "stub".into(),
            records: vec![PairRecord {
                pair_index: 0,
                snr_db: 0.0,
                rrmse_temporal: Some(0.4),
                rrmse_spectral: Some(0.4),
                cc: Some(0.9),
            }],
            failures: vec![],
            per_snr: vec![],
            band_ratios: None,
        };
        assert_eq!(best_worst(&report).unwrap(), (0, 0));
    }

    #[test]
    fn anova_identical_groups() {
        let g = [1.0, 2.0, 3.0];
        let (f, p) = anova_oneway(&[&g, &g]).unwrap();
        assert!(f.abs() < 1e-15);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn anova_hand_computed_case() {
        let a = [1.0, 2.0, 3.0];
        let b = [2.0, 3.0, 4.0];
        let (f, p) = anova_oneway(&[&a, &b]).unwrap();
        assert!((f - 1.5).abs() < 1e-12, "F = {f}");
        // closed form for df (1, 4): I_{8/11}(2, 1/2) = 0.2878641347...
        assert!((p - 0.287_864_134_7).abs() < 1e-9, "p = {p}");
    }

    #[test]
    fn anova_separated_groups_tiny_p() {
        let a = [0.0, 0.01, -0.01];
        let b = [10.0, 10.01, 9.99];
        let (f, p) = anova_oneway(&[&a, &b]).unwrap();
        assert!(f > 1000.0);
        assert!(p < 0.001);
    }

    #[test]
    fn anova_rejects_degenerate_groups() {
        let a = [1.0, 2.0];
        assert!(anova_oneway(&[&a]).is_err());
        let single = [1.0];
        assert!(anova_oneway(&[&a, &single]).is_err());
        let c1 = [1.0, 1.0];
        let c2 = [2.0, 2.0];
        assert!(anova_oneway(&[&c1, &c2]).is_err());
    }

    #[test]
    fn spearman_monotone_and_ties() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let up = [10.0, 20.0, 40.0, 80.0];
        let down = [5.0, 4.0, 3.0, 2.0];
        assert!((spearman(&x, &up).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &down).unwrap() + 1.0).abs() < 1e-12);
        let tied_x = [1.0, 2.0, 2.0, 3.0];
        let tied_y = [10.0, 20.0, 20.0, 30.0];
        assert!((spearman(&tied_x, &tied_y).unwrap() - 1.0).abs() < 1e-12);
    }
}
