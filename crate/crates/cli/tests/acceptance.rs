//! The release gate. Each test checks one exit requirement end to end,
//! prints a single verdict line, and enforces its own runtime budget.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use eegbench::autodiff::{grad_check, GradCheckReport, Tape, Tensor, Var};
use eegbench::baselines::{emd, EmdConfig, FilterBaseline};
use eegbench::dataset::{
    synth_surrogate_with, ten_snr_levels, ArtifactType, BankKind, SegmentBank,
};
use eegbench::dsp::band_power_ratios;
use eegbench::metrics::{cc, rrmse_spectral, rrmse_temporal, spearman, Denoiser};
use eegbench::models::{Model, ModelSpec, TrainConfig};
use eegbench::signal::{mix, noise_scale_for_snr, snr_of, Segment};
use eegbench::Result;
use tempfile::TempDir;

fn verdict(index: u32, name: &str, pass: bool, detail: &str) {
    let status = if pass { "pass" } else { "FAIL" };
    println!("check {index:02} [{status}] {name}: {detail}");
    assert!(pass, "check {index:02} {name}: {detail}");
}

fn seconds(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Deterministic filler clear of zero crossings and symmetry.
fn tensor(shape: &[usize], offset: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n)
        .map(|i| (i as f64 * 0.73 + offset).sin() * 0.9 + 0.3)
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn eeg_segments(count: usize, len: usize, fs: u32, seed: u64) -> Vec<Segment> {
    let bank = synth_surrogate_with(BankKind::Eeg, count, seed, len, fs).unwrap();
    (0..count).map(|i| bank.segment(i).unwrap()).collect()
}

#[test]
fn check_01_snr_round_trip_is_exact_at_every_level() {
    let start = Instant::now();
    let clean = eeg_segments(100, 512, 256, 1);
    let noise_bank = synth_surrogate_with(BankKind::Eog, 100, 2, 512, 256).unwrap();

    let mut worst: f64 = 0.0;
    for level in ten_snr_levels() {
        for (i, x) in clean.iter().enumerate() {
            let n = noise_bank.segment(i).unwrap();
            let scale = noise_scale_for_snr(x, &n, level).unwrap();
            let mixed = mix(x, &n, scale).unwrap();
            assert_eq!(mixed.len(), x.len());
            let measured = snr_of(x, &n.scaled(scale).unwrap()).unwrap();
            worst = worst.max((measured - level).abs());
        }
    }
    let elapsed = seconds(start);
    verdict(
        1,
        "snr round trip",
        worst < 1e-9 && elapsed < 1.0,
        &format!("worst error {worst:.3e} over ten levels x 100 pairs in {elapsed:.3}s (budget 1s)"),
    );
}

fn primitive_checks() -> Vec<(&'static str, GradCheckReport)> {
    type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;
    let mse_against = |tape: &mut Tape, out: Var, shape: &[usize]| {
        let target = tape.leaf(tensor(shape, 9.1), false);
        tape.mse(out, target)
    };

    let cases: Vec<(&'static str, Vec<Tensor>, Build)> = vec![
        (
            "matmul",
            vec![tensor(&[3, 4], 0.1), tensor(&[4, 2], 0.2)],
            Box::new(move |t, v| {
                let out = t.matmul(v[0], v[1])?;
                mse_against(t, out, &[3, 2])
            }),
        ),
        (
            "add",
            vec![tensor(&[3, 4], 0.3), tensor(&[3, 4], 0.4)],
            Box::new(move |t, v| {
                let out = t.add(v[0], v[1])?;
                mse_against(t, out, &[3, 4])
            }),
        ),
        (
            "add row broadcast",
            vec![tensor(&[3, 4], 0.5), tensor(&[1, 4], 0.6)],
            Box::new(move |t, v| {
                let out = t.add(v[0], v[1])?;
                mse_against(t, out, &[3, 4])
            }),
        ),
        (
            "add channel broadcast",
            vec![tensor(&[2, 3, 4], 0.7), tensor(&[1, 3, 1], 0.8)],
            Box::new(move |t, v| {
                let out = t.add(v[0], v[1])?;
                mse_against(t, out, &[2, 3, 4])
            }),
        ),
        (
            "mul",
            vec![tensor(&[3, 4], 0.9), tensor(&[3, 4], 1.0)],
            Box::new(move |t, v| {
                let out = t.mul(v[0], v[1])?;
                mse_against(t, out, &[3, 4])
            }),
        ),
        (
            "scale",
            vec![tensor(&[3, 4], 1.1)],
            Box::new(move |t, v| {
                let out = t.scale(v[0], -1.7)?;
                mse_against(t, out, &[3, 4])
            }),
        ),
        (
            "relu",
            vec![tensor(&[3, 4], 1.2)],
            Box::new(move |t, v| {
                let out = t.relu(v[0])?;
                mse_against(t, out, &[3, 4])
            }),
        ),
        (
            "sigmoid",
            vec![tensor(&[3, 4], 1.3)],
            Box::new(move |t, v| {
                let out = t.sigmoid(v[0])?;
                mse_against(t, out, &[3, 4])
            }),
        ),
        (
            "tanh",
            vec![tensor(&[3, 4], 1.4)],
            Box::new(move |t, v| {
                let out = t.tanh(v[0])?;
                mse_against(t, out, &[3, 4])
            }),
        ),
        (
            "conv1d",
            vec![tensor(&[2, 3, 8], 1.5), tensor(&[4, 3, 3], 1.6)],
            Box::new(move |t, v| {
                let out = t.conv1d(v[0], v[1], 1, 1)?;
                mse_against(t, out, &[2, 4, 8])
            }),
        ),
        (
            "conv1d strided",
            vec![tensor(&[2, 3, 8], 1.7), tensor(&[2, 3, 3], 1.8)],
            Box::new(move |t, v| {
                let out = t.conv1d(v[0], v[1], 2, 0)?;
                mse_against(t, out, &[2, 2, 3])
            }),
        ),
        (
            "dropout",
            vec![tensor(&[3, 4], 1.9)],
            Box::new(move |t, v| {
                let keep = [
                    true, false, true, true, true, true, false, true, true, true, true, false,
                ];
                let out = t.dropout(v[0], &keep, 0.75)?;
                mse_against(t, out, &[3, 4])
            }),
        ),
        (
            "batch_norm_train",
            vec![
                tensor(&[2, 3, 5], 2.0),
                tensor(&[1, 3, 1], 2.1),
                tensor(&[1, 3, 1], 2.2),
            ],
            Box::new(move |t, v| {
                let (out, _stats) = t.batch_norm_train(v[0], v[1], v[2], 1e-5)?;
                mse_against(t, out, &[2, 3, 5])
            }),
        ),
        (
            "channel_affine",
            vec![tensor(&[2, 3, 4], 2.3)],
            Box::new(move |t, v| {
                let out = t.channel_affine(v[0], &[1.5, 0.7, -0.4], &[0.1, -0.2, 0.3])?;
                mse_against(t, out, &[2, 3, 4])
            }),
        ),
        (
            "reshape",
            vec![tensor(&[2, 6], 2.4)],
            Box::new(move |t, v| {
                let out = t.reshape(v[0], vec![3, 4])?;
                mse_against(t, out, &[3, 4])
            }),
        ),
        (
            "flatten",
            vec![tensor(&[2, 3, 4], 2.5)],
            Box::new(move |t, v| {
                let out = t.flatten(v[0])?;
                mse_against(t, out, &[2, 12])
            }),
        ),
        (
            "slice_cols",
            vec![tensor(&[3, 8], 2.6)],
            Box::new(move |t, v| {
                let out = t.slice_cols(v[0], 2, 4)?;
                mse_against(t, out, &[3, 4])
            }),
        ),
        (
            "concat_cols",
            vec![tensor(&[3, 2], 2.7), tensor(&[3, 3], 2.8)],
            Box::new(move |t, v| {
                let out = t.concat_cols(&[v[0], v[1]])?;
                mse_against(t, out, &[3, 5])
            }),
        ),
        (
            "concat_channels",
            vec![tensor(&[2, 2, 4], 2.9), tensor(&[2, 1, 4], 3.0)],
            Box::new(move |t, v| {
                let out = t.concat_channels(&[v[0], v[1]])?;
                mse_against(t, out, &[2, 3, 4])
            }),
        ),
        (
            "mse",
            vec![tensor(&[3, 4], 3.1)],
            Box::new(move |t, v| {
                let target = t.leaf(tensor(&[3, 4], 3.2), false);
                t.mse(v[0], target)
            }),
        ),
    ];

    cases
        .into_iter()
        .map(|(name, params, build)| (name, grad_check(&params, 1e-5, build).unwrap()))
        .collect()
}

#[test]
fn check_02_gradients_match_finite_differences_everywhere() {
    let start = Instant::now();
    let mut worst = ("", 0.0f64);
    for (name, report) in primitive_checks() {
        if report.max_rel_error > worst.1 {
            worst = (name, report.max_rel_error);
        }
        assert!(
            report.passes(1e-4),
            "{name}: max relative error {:.3e}",
            report.max_rel_error
        );
    }

    let specs = [
        ModelSpec::fcnn(16),
        ModelSpec::simple_cnn(16).with_feature_maps(4),
        ModelSpec::complex_cnn(16).with_branch_width(2),
        ModelSpec::rnn(16),
    ];
    let inputs = tensor(&[2, 16], 4.1);
    let targets = tensor(&[2, 16], 4.2);
    for spec in specs {
        let name = spec.architecture.name();
        let model = Model::new(spec, 11).unwrap();
        let report = model.check_gradients(&inputs, &targets, 1e-5).unwrap();
        if report.max_rel_error > worst.1 {
            worst = (name, report.max_rel_error);
        }
        assert!(
            report.passes(1e-4),
            "{name}: max relative error {:.3e}",
            report.max_rel_error
        );
    }

    let elapsed = seconds(start);
    verdict(
        2,
        "gradient checks",
        elapsed < 60.0,
        &format!(
            "every primitive and architecture under 1e-4 (worst {} at {:.3e}) in {elapsed:.2}s (budget 60s)",
            worst.0, worst.1
        ),
    );
}

#[test]
fn check_03_metric_identities_hold() {
    let start = Instant::now();
    let x = eeg_segments(1, 512, 256, 3).pop().unwrap();
    let neg = Segment::new(x.samples().iter().map(|v| -v).collect(), x.fs()).unwrap();
    let zeros = Segment::new(vec![0.0; x.len()], x.fs()).unwrap();

    let t_self = rrmse_temporal(&x, &x).unwrap();
    let s_self = rrmse_spectral(&x, &x).unwrap();
    let cc_self = cc(&x, &x).unwrap();
    let cc_neg = cc(&neg, &x).unwrap();
    let t_zero = rrmse_temporal(&zeros, &x).unwrap();

    let pass = t_self == 0.0
        && s_self == 0.0
        && (cc_self - 1.0).abs() < 1e-12
        && (cc_neg + 1.0).abs() < 1e-12
        && t_zero == 1.0;
    let elapsed = seconds(start);
    verdict(
        3,
        "metric identities",
        pass && elapsed < 1.0,
        &format!(
            "self 0/0/1, negated -1, zero method {t_zero} in {elapsed:.3}s (budget 1s)"
        ),
    );
}

#[test]
fn check_04_mode_decomposition_reconstructs_the_input() {
    let start = Instant::now();
    let segments = eeg_segments(100, 512, 256, 4);
    let cfg = EmdConfig::default();
    let mut worst: f64 = 0.0;
    for seg in &segments {
        let set = emd(seg, &cfg).unwrap();
        let mut recon = set.residual.samples().to_vec();
        for imf in &set.imfs {
            for (r, v) in recon.iter_mut().zip(imf.samples()) {
                *r += v;
            }
        }
        let err: f64 = recon
            .iter()
            .zip(seg.samples())
            .map(|(r, x)| (r - x) * (r - x))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = seg.samples().iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max(err / norm);
    }
    let elapsed = seconds(start);
    verdict(
        4,
        "decomposition completeness",
        worst < 1e-8 && elapsed < 30.0,
        &format!("worst relative error {worst:.3e} over 100 segments in {elapsed:.2}s (budget 30s)"),
    );
}

#[test]
fn check_05_ocular_filter_empties_the_low_bands() {
    let start = Instant::now();
    let method = FilterBaseline {
        artifact: ArtifactType::Ocular,
    };
    // The reference signature is a mean over segments, so the bound applies
    // per band on the averaged ratios.
    let denoised: Vec<Segment> = eeg_segments(100, 512, 256, 5)
        .iter()
        .map(|seg| method.denoise(seg).unwrap())
        .collect();
    let means = mean_ratios(&denoised);
    let worst = means[0].max(means[1]).max(means[2]);
    let elapsed = seconds(start);
    verdict(
        5,
        "low-band suppression",
        worst < 0.01 && elapsed < 5.0,
        &format!(
            "mean delta/theta/alpha ratios {:.4}/{:.4}/{:.4} over 100 segments in {elapsed:.2}s (budget 5s)",
            means[0], means[1], means[2]
        ),
    );
}

fn mean_ratios(segments: &[Segment]) -> [f64; 5] {
    let mut acc = [0.0; 5];
    for seg in segments {
        let r = band_power_ratios(seg).unwrap().as_array();
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    acc.map(|v| v / segments.len() as f64)
}

#[test]
fn check_06_contamination_shifts_the_expected_bands() {
    let start = Instant::now();
    let count = 120;

    let mut shifts = Vec::new();
    for (artifact_kind, seed, band_index) in
        [(BankKind::Eog, 6u64, 0usize), (BankKind::Emg, 7, 4)]
    {
        // Myogenic rows live at a higher rate; synthesize everything there.
        let (len, fs) = (1024, 512);
        let clean_bank = synth_surrogate_with(BankKind::Eeg, count, seed, len, fs).unwrap();
        let noise_bank = synth_surrogate_with(artifact_kind, count, seed + 50, len, fs).unwrap();
        let clean: Vec<Segment> = (0..count).map(|i| clean_bank.segment(i).unwrap()).collect();
        let contaminated: Vec<Segment> = clean
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let n = noise_bank.segment(i).unwrap();
                let scale = noise_scale_for_snr(x, &n, -3.0).unwrap();
                mix(x, &n, scale).unwrap()
            })
            .collect();
        let before = mean_ratios(&clean)[band_index];
        let after = mean_ratios(&contaminated)[band_index];
        shifts.push((before, after));
    }

    let (ocular_ok, myogenic_ok) = (shifts[0].1 > shifts[0].0, shifts[1].1 > shifts[1].0);
    let elapsed = seconds(start);
    verdict(
        6,
        "contamination signatures",
        ocular_ok && myogenic_ok && elapsed < 10.0,
        &format!(
            "delta {:.3} -> {:.3}, gamma {:.3} -> {:.3} at -3 dB over {count} segments in {elapsed:.2}s (budget 10s)",
            shifts[0].0, shifts[0].1, shifts[1].0, shifts[1].1
        ),
    );
}

struct BenchRuns {
    _dir: TempDir,
    first: PathBuf,
    second: PathBuf,
    wall: Duration,
}

fn run_benchmark(out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_eegbench"))
        .args(["benchmark", "--surrogate", "--scale", "desk", "--artifact", "ocular"])
        .args(["--method", "identity", "--method", "filter", "--method", "fcnn"])
        .args(["--seed", "0"])
        .arg("--out")
        .arg(out)
        .status()
        .unwrap();
    assert!(status.success(), "benchmark run failed");
}

// Two identical full desk runs, shared by checks 7, 9, and 10.
fn bench_runs() -> &'static BenchRuns {
    static RUNS: OnceLock<BenchRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("first");
        let second = dir.path().join("second");
        let start = Instant::now();
        run_benchmark(&first);
        let wall = start.elapsed();
        run_benchmark(&second);
        BenchRuns {
            _dir: dir,
            first,
            second,
            wall,
        }
    })
}

/// Per-level temporal-error means for one method, in ascending level order.
fn level_means(results: &Path, method: &str) -> (Vec<f64>, Vec<f64>) {
    let csv = std::fs::read_to_string(results.join("aggregate.csv")).unwrap();
    let mut levels = Vec::new();
    let mut means = Vec::new();
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells[0] == method {
            levels.push(cells[1].parse().unwrap());
            means.push(cells[2].parse().unwrap());
        }
    }
    (levels, means)
}

#[test]
fn check_07_error_falls_as_input_quality_rises() {
    let runs = bench_runs();
    let mut rhos = Vec::new();
    for method in ["filter", "fcnn"] {
        let (levels, means) = level_means(&runs.first, method);
        assert_eq!(levels.len(), 10, "{method} must cover all ten levels");
        rhos.push((method, spearman(&means, &levels).unwrap()));
    }
    let pass = rhos.iter().all(|(_, rho)| *rho <= -0.8);
    let wall = runs.wall.as_secs_f64();
    verdict(
        7,
        "error vs mixing level",
        pass && wall < 600.0,
        &format!(
            "spearman filter {:.3}, fcnn {:.3} (threshold -0.8), benchmark wall {wall:.1}s (budget 600s)",
            rhos[0].1, rhos[1].1
        ),
    );
}

#[test]
fn check_08_training_actually_reduces_the_loss() {
    let start = Instant::now();
    let mut cfg = eegbench_cli::config::ExperimentConfig::preset(eegbench_cli::config::Scale::Desk);
    cfg.surrogate = true;
    let sets = eegbench_cli::data::generate_sets(&cfg, 0).unwrap();

    let mut details = Vec::new();
    let mut pass = true;
    for spec in [
        ModelSpec::fcnn(64),
        ModelSpec::simple_cnn(64).with_feature_maps(8),
    ] {
        let name = spec.architecture.name();
        let mut model = Model::new(spec, 7).unwrap();
        let train_cfg = TrainConfig::new(35, 3)
            .with_batch_size(64)
            .with_learning_rate(1e-3);
        let record = model.train(&sets.train, &sets.val, &train_cfg).unwrap();

        let first = record.train_loss[0];
        let last = *record.train_loss.last().unwrap();
        let smooth = record.smoothed_train_loss(5);
        let rising = smooth.windows(2).filter(|w| w[1] > w[0] + 1e-12).count();
        pass &= last < 0.5 * first && rising == 0;
        details.push(format!(
            "{name} {first:.3} -> {last:.3} ({rising} smoothed rises)"
        ));
    }
    let elapsed = seconds(start);
    verdict(
        8,
        "learning sanity",
        pass && elapsed < 600.0,
        &format!("{} in {elapsed:.1}s (budget 600s)", details.join("; ")),
    );
}

#[test]
fn check_09_the_trained_model_beats_doing_nothing() {
    let runs = bench_runs();
    let (levels, fcnn) = level_means(&runs.first, "fcnn");
    let (_, identity) = level_means(&runs.first, "identity");
    let worst_level = levels
        .iter()
        .position(|&l| l == -7.0)
        .expect("the -7 dB level is part of the default grid");
    let pass = fcnn[worst_level] < identity[worst_level];
    verdict(
        9,
        "model vs identity at -7 dB",
        pass,
        &format!(
            "fcnn mean temporal error {:.4} vs identity {:.4}",
            fcnn[worst_level], identity[worst_level]
        ),
    );
}

#[test]
fn check_10_identical_configs_reproduce_identical_aggregates() {
    let runs = bench_runs();
    let mut same = true;
    for name in ["aggregate.csv", "anova.csv", "band_ratios.csv"] {
        let a = std::fs::read(runs.first.join(name)).unwrap();
        let b = std::fs::read(runs.second.join(name)).unwrap();
        same &= a == b;
    }
    verdict(
        10,
        "byte-identical reruns",
        same,
        "aggregate.csv, anova.csv, band_ratios.csv identical across two runs",
    );
}

#[test]
fn check_11_real_banks_load_with_the_documented_shapes() {
    let Some(root) = std::env::var_os(eegbench_cli::data::DATA_ENV) else {
        println!(
            "check 11 [skip] real banks: set {} to a directory with the .npy banks to enable",
            eegbench_cli::data::DATA_ENV
        );
        return;
    };
    let start = Instant::now();
    let root = PathBuf::from(root);

    let expected = [
        (BankKind::Eeg, "EEG_all_epochs.npy", 256u32, 4514usize, 512usize),
        (BankKind::Eog, "EOG_all_epochs.npy", 256, 3400, 512),
        (BankKind::Emg, "EMG_all_epochs.npy", 512, 5598, 1024),
    ];
    let mut eeg_bank = None;
    for (kind, file, fs, rows, cols) in expected {
        let bank = SegmentBank::from_npy(kind, &root.join(file), fs).unwrap();
        assert_eq!((bank.rows(), bank.cols()), (rows, cols), "{file} shape");
        if kind == BankKind::Eeg {
            eeg_bank = Some(bank);
        }
    }

    let bank = eeg_bank.unwrap();
    let segments: Vec<Segment> = (0..bank.rows()).map(|i| bank.segment(i).unwrap()).collect();
    let means = mean_ratios(&segments);
    let reference = [0.143, 0.141, 0.093, 0.467, 0.157];
    let worst = means
        .iter()
        .zip(reference)
        .map(|(m, r)| (m - r).abs())
        .fold(0.0f64, f64::max);

    let elapsed = seconds(start);
    verdict(
        11,
        "real banks",
        worst <= 0.02 && elapsed < 60.0,
        &format!(
            "shapes ok; clean-bank ratios {means:.3?} vs {reference:.3?} (worst gap {worst:.4}) in {elapsed:.1}s (budget 60s)"
        ),
    );
}
