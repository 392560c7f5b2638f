//! Segment type and the mixing / normalization arithmetic.
//!
//! A contaminated segment is built by adding a scaled artifact to a clean
//! segment, `y = x + scale * n`, where the scale is chosen so that the
//! RMS-ratio SNR `10 * log10(rms(x) / rms(scale * n))` hits a requested
//! decibel target. Before training, both members of a pair are divided by
//! the population standard deviation of the contaminated segment; the
//! divisor is kept so network output can be mapped back to input units.
//!
//! All arithmetic is f64. Standard deviations are the population
//! (divide-by-N) form throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-dimensional real-valued time series with its sampling rate.
///
/// Invariants (enforced at construction): samples non-empty, all values
/// finite, sampling rate positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    samples: Vec<f64>,
    fs: u32,
}

impl Segment {
    pub fn new(samples: Vec<f64>, fs: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("segment must be non-empty".into()));
        }
        if fs == 0 {
            return Err(Error::InvalidInput("sampling rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "segment contains non-finite value at index {i}"
            )));
        }
        Ok(Segment { samples, fs })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn fs(&self) -> u32 {
        self.fs
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false // non-empty by construction
    }

    /// Root mean square: `sqrt(mean(samples^2))`.
    pub fn rms(&self) -> f64 {
        rms_slice(&self.samples)
    }

    /// Mean of the samples.
    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Population (divide-by-N) standard deviation.
    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        let var = self.samples.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
            / self.samples.len() as f64;
        var.sqrt()
    }

    /// Subtract the mean and divide by the population standard deviation.
    ///
    /// Fails with a degenerate-signal error on constant segments.
    pub fn standardize(&self) -> Result<Segment> {
        let m = self.mean();
        let sd = self.std_dev();
        if sd == 0.0 || !sd.is_finite() {
            return Err(Error::DegenerateSignal(
                "cannot standardize a constant segment".into(),
            ));
        }
        let samples = self.samples.iter().map(|v| (v - m) / sd).collect();
        Segment::new(samples, self.fs)
    }

    /// Elementwise scale by a constant.
    pub fn scaled(&self, factor: f64) -> Result<Segment> {
        Segment::new(self.samples.iter().map(|v| v * factor).collect(), self.fs)
    }
}

pub(crate) fn rms_slice(samples: &[f64]) -> f64 {
    let sum_sq: f64 = samples.iter().map(|v| v * v).sum();
    (sum_sq / samples.len() as f64).sqrt()
}

/// Mixing parameters binding the artifact scale to its SNR target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixParams {
    /// Nonnegative factor applied to the artifact before adding it.
    pub noise_scale: f64,
    /// The decibel SNR the scale was derived from.
    pub snr_db: f64,
}

impl MixParams {
    pub fn new(noise_scale: f64, snr_db: f64) -> Result<Self> {
        if !(noise_scale >= 0.0) || !noise_scale.is_finite() {
            return Err(Error::InvalidInput(format!(
                "noise scale must be finite and nonnegative, got {noise_scale}"
            )));
        }
        if !snr_db.is_finite() {
            return Err(Error::InvalidInput("snr_db must be finite".into()));
        }
        Ok(MixParams { noise_scale, snr_db })
    }
}

/// Record of the divisor used to normalize a (clean, contaminated) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    /// Population standard deviation of the contaminated segment.
    pub contaminated_std: f64,
}

impl NormalizationRecord {
    pub fn new(contaminated_std: f64) -> Result<Self> {
        if !(contaminated_std > 0.0) || !contaminated_std.is_finite() {
            return Err(Error::DegenerateSignal(format!(
                "normalization divisor must be positive, got {contaminated_std}"
            )));
        }
        Ok(NormalizationRecord { contaminated_std })
    }
}

/// Artifact scale that realizes `snr_db` when mixing `noise` into `clean`:
/// `scale = rms(clean) / (rms(noise) * 10^(snr_db / 10))`.
///
/// The SNR convention is the RMS ratio in decibels (base 10), not a power
/// ratio; `snr_of(clean, noise.scaled(scale))` inverts this exactly.
pub fn noise_scale_for_snr(clean: &Segment, noise: &Segment, snr_db: f64) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(Error::InvalidInput("snr_db must be finite".into()));
    }
    let rx = clean.rms();
    let rn = noise.rms();
    if rx == 0.0 {
        return Err(Error::DegenerateSignal("clean segment has zero RMS".into()));
    }
    if rn == 0.0 {
        return Err(Error::DegenerateSignal("noise segment has zero RMS".into()));
    }
    Ok(rx / (rn * 10f64.powf(snr_db / 10.0)))
}

/// Elementwise `clean + noise_scale * noise`. Lengths and sampling rates
/// must match.
pub fn mix(clean: &Segment, noise: &Segment, noise_scale: f64) -> Result<Segment> {
    if clean.len() != noise.len() {
        return Err(Error::shape(
            "mix",
            format!("lengths {} vs {}", clean.len(), noise.len()),
        ));
    }
    if clean.fs() != noise.fs() {
        return Err(Error::shape(
            "mix",
            format!("sampling rates {} vs {}", clean.fs(), noise.fs()),
        ));
    }
    let samples = clean
        .samples()
        .iter()
        .zip(noise.samples())
        .map(|(x, n)| x + noise_scale * n)
        .collect();
    Segment::new(samples, clean.fs())
}

/// RMS-ratio SNR in decibels: `10 * log10(rms(clean) / rms(scaled_noise))`.
pub fn snr_of(clean: &Segment, scaled_noise: &Segment) -> Result<f64> {
    let rx = clean.rms();
    let rn = scaled_noise.rms();
    if rx == 0.0 {
        return Err(Error::DegenerateSignal("clean segment has zero RMS".into()));
    }
    if rn == 0.0 {
        return Err(Error::DegenerateSignal("scaled noise has zero RMS".into()));
    }
    Ok(10.0 * (rx / rn).log10())
}

/// Divide both segments by the population standard deviation of the
/// contaminated one. Returns the scaled pair plus the divisor record.
pub fn normalize_pair(
    clean: &Segment,
    contaminated: &Segment,
) -> Result<(Segment, Segment, NormalizationRecord)> {
    if clean.len() != contaminated.len() {
        return Err(Error::shape(
            "normalize_pair",
            format!("lengths {} vs {}", clean.len(), contaminated.len()),
        ));
    }
    let record = NormalizationRecord::new(contaminated.std_dev())?;
    let inv = 1.0 / record.contaminated_std;
    Ok((clean.scaled(inv)?, contaminated.scaled(inv)?, record))
}

/// Multiply back by the stored divisor, undoing [`normalize_pair`].
pub fn denormalize(segment: &Segment, record: &NormalizationRecord) -> Result<Segment> {
    segment.scaled(record.contaminated_std)
}
