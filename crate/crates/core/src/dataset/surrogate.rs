//! Synthetic surrogate segments for dataset-free testing.
//!
//! Each kind is built by spectral synthesis: draw random phases on a target
//! power profile, invert to the time domain, and standardize. Rows are
//! generated on independent generator streams keyed by row index, so a bank
//! is bit-identical whether rows are produced in parallel or serially.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::par;

use super::{BankKind, SegmentBank};

/// Default segment length and rate per kind: EEG and ocular rows are
/// 512 @ 256 Hz, myogenic rows 1024 @ 512 Hz.
pub fn default_dims(kind: BankKind) -> (usize, u32) {
    match kind {
        BankKind::Eeg | BankKind::Eog => (512, 256),
        BankKind::Emg => (1024, 512),
    }
}

/// Generate `count` surrogate rows at the kind's default length and rate.
pub fn synth_surrogate(kind: BankKind, count: usize, seed: u64) -> Result<SegmentBank> {
    let (len, fs) = default_dims(kind);
    synth_surrogate_with(kind, count, seed, len, fs)
}

/// Generate `count` surrogate rows with explicit dimensions.
pub fn synth_surrogate_with(
    kind: BankKind,
    count: usize,
    seed: u64,
    len: usize,
    fs: u32,
) -> Result<SegmentBank> {
    if count == 0 {
        return Err(Error::InvalidInput("surrogate count must be >= 1".into()));
    }
    if len < 16 || fs == 0 {
        return Err(Error::InvalidInput(format!(
            "surrogate rows need len >= 16 and fs > 0, got {len} @ {fs} Hz"
        )));
    }

    let rows: Vec<Vec<f64>> = par::map_range(count, |row| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(row as u64);
        match kind {
            BankKind::Eeg => eeg_row(len, fs, &mut rng),
            BankKind::Eog => eog_row(len, fs, &mut rng),
            BankKind::Emg => emg_row(len, fs, &mut rng),
        }
    });

    let mut data = Vec::with_capacity(count * len);
    for row in rows {
        data.extend(standardize(row));
    }
    SegmentBank::new(kind, data, count, len, fs)
}

/// Brain-like background modeled on task recordings: a 1/f core that rolls
/// off past 8 Hz, a narrow 10 Hz rhythm, and a broadband shelf rising through
/// beta then decaying past 40 Hz. Task EEG is beta-rich with a partially
/// suppressed, narrow alpha rhythm, so spectral density dips between the
/// rhythm and the shelf.
fn eeg_row(len: usize, fs: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let upper = 80.0_f64.min(0.45 * fs as f64);
    let knee = 8.0_f64.min(0.6 * upper);
    let bump_center = 10.0_f64.min(0.8 * upper);
    let bump_width = 0.5;
    // rhythm carries 0.55 integrated power against the unit-scale 1/f core
    let bump_gain = 0.55 / (bump_width * (2.0 * PI).sqrt());
    let shelf_level = 0.13;
    spectral_noise(len, fs, rng, |f| {
        if f < 1.0 || f > upper {
            return 0.0;
        }
        let core = if f <= knee {
            1.0 / f
        } else {
            (knee / f).powi(10) / knee
        };
        let d = (f - bump_center) / bump_width;
        let rhythm = bump_gain * (-0.5 * d * d).exp();
        let rolloff = if f <= 40.0 { 1.0 } else { (40.0 / f) * (40.0 / f) };
        let shelf = shelf_level * rolloff / (1.0 + (-(f - 15.5)).exp());
        core + rhythm + shelf
    })
}

/// Blink-like activity: a few smooth positive pulses over a slow drift.
fn eog_row(len: usize, fs: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n_pulses = rng.random_range(2..=5usize);
    let fs_f = fs as f64;
    let mut row = vec![0.0; len];
    for _ in 0..n_pulses {
        let center = rng.random_range(0.1 * len as f64..0.9 * len as f64);
        let sigma = rng.random_range(0.05..0.15) * fs_f;
        let amplitude = rng.random_range(0.5..1.5);
        for (i, v) in row.iter_mut().enumerate() {
            let d = (i as f64 - center) / sigma;
            *v += amplitude * (-0.5 * d * d).exp();
        }
    }
    let drift_freq = rng.random_range(0.3..1.0);
    let drift_phase = rng.random_range(0.0..2.0 * PI);
    for (i, v) in row.iter_mut().enumerate() {
        *v += 0.3 * (2.0 * PI * drift_freq * i as f64 / fs_f + drift_phase).sin();
    }

    // Faint wideband residue at a twentieth of the pulse power: a 0.3-10 Hz
    // bandpass only attenuates past its corner, it does not erase, so real
    // ocular recordings keep a decaying tail above 10 Hz.
    let upper = 80.0_f64.min(0.45 * fs_f);
    let residue = spectral_noise(len, fs, rng, |f| {
        if f < 0.3 || f > upper {
            0.0
        } else if f <= 10.0 {
            1.0
        } else {
            (10.0 / f).powi(3)
        }
    });
    let row_power = row.iter().map(|v| v * v).sum::<f64>();
    let residue_power = residue.iter().map(|v| v * v).sum::<f64>();
    if residue_power > 0.0 {
        let gain = (0.05 * row_power / residue_power).sqrt();
        for (v, r) in row.iter_mut().zip(&residue) {
            *v += gain * r;
        }
    }
    row
}

/// Muscle-like activity: flat-band noise from 20 Hz up, gated by a smooth
/// burst envelope over a small tonic baseline.
fn emg_row(len: usize, fs: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let nyquist = fs as f64 / 2.0;
    let upper = 120.0_f64.min(0.9 * nyquist);
    let lower = 20.0_f64.min(0.5 * upper);
    let mut noise = spectral_noise(len, fs, rng, |f| {
        if f >= lower && f <= upper {
            1.0
        } else {
            0.0
        }
    });

    let n_bursts = rng.random_range(1..=3usize);
    let mut envelope = vec![0.2; len];
    for _ in 0..n_bursts {
        let center = rng.random_range(0.15 * len as f64..0.85 * len as f64);
        let half_width = rng.random_range(0.05..0.15) * len as f64;
        let lo = ((center - half_width).max(0.0)) as usize;
        let hi = ((center + half_width).min(len as f64 - 1.0)) as usize;
        for (i, e) in envelope.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let phase = (i as f64 - center) / half_width * PI;
            *e += 0.5 * (1.0 + phase.cos());
        }
    }
    for (v, e) in noise.iter_mut().zip(&envelope) {
        *v *= e;
    }
    noise
}

/// Random-phase synthesis on the given one-sided power profile.
fn spectral_noise(
    len: usize,
    fs: u32,
    rng: &mut ChaCha8Rng,
    power_at: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let mut spectrum = vec![Complex64::new(0.0, 0.0); len];
    let df = fs as f64 / len as f64;
    let half = len / 2;
    for k in 1..half {
        let p = power_at(k as f64 * df);
        if p > 0.0 {
            let phase = rng.random::<f64>() * 2.0 * PI;
            let bin = Complex64::from_polar(p.sqrt(), phase);
            spectrum[k] = bin;
            spectrum[len - k] = bin.conj();
        }
    }
    // DC and (for even lengths) Nyquist stay zero: both sit outside every
    // profile's support and must be real anyway.

    FftPlanner::new().plan_fft_inverse(len).process(&mut spectrum);
    spectrum.iter().map(|c| c.re / len as f64).collect()
}

fn standardize(mut row: Vec<f64>) -> Vec<f64> {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std > 0.0 {
        for v in &mut row {
            *v = (*v - mean) / std;
        }
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp;

    #[test]
    fn same_seed_is_bit_identical() {
        let a = synth_surrogate(BankKind::Eeg, 5, 42).unwrap();
        let b = synth_surrogate(BankKind::Eeg, 5, 42).unwrap();
        for i in 0..5 {
            assert_eq!(a.row(i), b.row(i));
        }
        let c = synth_surrogate(BankKind::Eeg, 5, 43).unwrap();
        assert_ne!(a.row(0), c.row(0));
    }

    #[test]
    fn rows_are_standardized() {
        for kind in [BankKind::Eeg, BankKind::Eog, BankKind::Emg] {
            let bank = synth_surrogate(kind, 3, 7).unwrap();
            for i in 0..3 {
                let row = bank.row(i);
                let n = row.len() as f64;
                let mean = row.iter().sum::<f64>() / n;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                assert!(mean.abs() < 1e-9, "{kind:?} row {i} mean {mean}");
                assert!((var - 1.0).abs() < 1e-9, "{kind:?} row {i} var {var}");
            }
        }
    }

    #[test]
    fn eeg_has_alpha_excess_over_white_noise() {
        let bank = synth_surrogate(BankKind::Eeg, 20, 3).unwrap();
        let mut alpha_sum = 0.0;
        for i in 0..bank.rows() {
            let seg = bank.segment(i).unwrap();
            alpha_sum += dsp::band_power_ratios(&seg).unwrap().alpha;
        }
        let mean_alpha = alpha_sum / bank.rows() as f64;

        // white-noise reference: alpha share of a flat 1-80 Hz spectrum
        let white_alpha = 5.0 / 79.0;
        assert!(
            mean_alpha > 1.25 * white_alpha,
            "alpha ratio {mean_alpha} vs white {white_alpha}"
        );
    }

    #[test]
    fn eog_power_is_low_frequency() {
        let bank = synth_surrogate(BankKind::Eog, 10, 5).unwrap();
        for i in 0..bank.rows() {
            let seg = bank.segment(i).unwrap();
            let est = dsp::psd(&seg).unwrap();
            let mut below = 0.0;
            let mut total = 0.0;
            for (f, p) in est.freqs.iter().zip(&est.power) {
                if (1.0..=80.0).contains(f) {
                    total += p;
                    if *f < 10.0 {
                        below += p;
                    }
                }
            }
            assert!(below / total >= 0.9, "row {i}: {}", below / total);
        }
    }

    #[test]
    fn emg_power_sits_in_the_muscle_band() {
        let bank = synth_surrogate(BankKind::Emg, 10, 9).unwrap();
        assert_eq!(bank.cols(), 1024);
        assert_eq!(bank.fs(), 512);
        for i in 0..bank.rows() {
            let seg = bank.segment(i).unwrap();
            let est = dsp::psd(&seg).unwrap();
            let mut inside = 0.0;
            let mut total = 0.0;
            for (f, p) in est.freqs.iter().zip(&est.power) {
                total += p;
                if (15.0..=125.0).contains(f) {
                    inside += p;
                }
            }
            assert!(inside / total >= 0.9, "row {i}: {}", inside / total);
        }
    }

    #[test]
    fn scaled_dims_supported() {
        let bank = synth_surrogate_with(BankKind::Eeg, 4, 1, 64, 64).unwrap();
        assert_eq!(bank.cols(), 64);
        assert_eq!(bank.fs(), 64);
        assert!(synth_surrogate_with(BankKind::Eeg, 0, 1, 64, 64).is_err());
        assert!(synth_surrogate_with(BankKind::Eeg, 4, 1, 8, 64).is_err());
    }
}
