//! Filtering, resampling, and spectral estimation.
//!
//! Recursive filters are Butterworth designs realized as cascaded biquad
//! sections; zero-phase use runs them forward and backward over a
//! reflection-padded copy of the segment. Resampling is polyphase rational
//! resampling with a windowed-sinc anti-alias stage. PSD estimation is a
//! one-sided periodogram whose FFT length equals the segment length.

mod filter;
mod resample;
mod spectrum;

pub use filter::{design_filter, IirFilter};
pub use resample::resample;
pub use spectrum::{psd, psd_with_window, PsdEstimate, PsdWindow};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Segment;

/// Filter response family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Lowpass,
    Highpass,
    Bandpass,
    Bandstop,
}

/// Declarative recursive-filter specification.
///
/// Cutoffs must lie strictly inside (0, fs/2) at design time; band filters
/// need two ascending cutoffs, the others one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    /// One cutoff for lowpass/highpass, two (low, high) for band filters.
    pub cutoffs_hz: Vec<f64>,
    pub order: usize,
    /// Apply forward-backward for zero group delay.
    pub zero_phase: bool,
}

impl FilterSpec {
    pub const DEFAULT_ORDER: usize = 4;

    pub fn lowpass(cutoff_hz: f64, order: usize) -> Self {
        FilterSpec {
            kind: FilterKind::Lowpass,
            cutoffs_hz: vec![cutoff_hz],
            order,
            zero_phase: true,
        }
    }

    pub fn highpass(cutoff_hz: f64, order: usize) -> Self {
        FilterSpec {
            kind: FilterKind::Highpass,
            cutoffs_hz: vec![cutoff_hz],
            order,
            zero_phase: true,
        }
    }

    pub fn bandpass(low_hz: f64, high_hz: f64, order: usize) -> Self {
        FilterSpec {
            kind: FilterKind::Bandpass,
            cutoffs_hz: vec![low_hz, high_hz],
            order,
            zero_phase: true,
        }
    }

    pub fn bandstop(low_hz: f64, high_hz: f64, order: usize) -> Self {
        FilterSpec {
            kind: FilterKind::Bandstop,
            cutoffs_hz: vec![low_hz, high_hz],
            order,
            zero_phase: true,
        }
    }

    pub fn single_pass(mut self) -> Self {
        self.zero_phase = false;
        self
    }

    pub(crate) fn validate(&self, fs: u32) -> Result<()> {
        if self.order == 0 {
            return Err(Error::FilterSpec("order must be at least 1".into()));
        }
        let nyquist = fs as f64 / 2.0;
        let expected = match self.kind {
            FilterKind::Lowpass | FilterKind::Highpass => 1,
            FilterKind::Bandpass | FilterKind::Bandstop => 2,
        };
        if self.cutoffs_hz.len() != expected {
            return Err(Error::FilterSpec(format!(
                "{:?} needs {} cutoff(s), got {}",
                self.kind,
                expected,
                self.cutoffs_hz.len()
            )));
        }
        for &c in &self.cutoffs_hz {
            if !(c > 0.0 && c < nyquist) {
                return Err(Error::FilterSpec(format!(
                    "cutoff {c} Hz outside (0, {nyquist}) at fs {fs}"
                )));
            }
        }
        if expected == 2 && self.cutoffs_hz[0] >= self.cutoffs_hz[1] {
            return Err(Error::FilterSpec(format!(
                "band cutoffs must be ascending, got {} >= {}",
                self.cutoffs_hz[0], self.cutoffs_hz[1]
            )));
        }
        Ok(())
    }

    /// Order of the realized digital filter (band kinds double it).
    pub fn effective_order(&self) -> usize {
        match self.kind {
            FilterKind::Lowpass | FilterKind::Highpass => self.order,
            FilterKind::Bandpass | FilterKind::Bandstop => 2 * self.order,
        }
    }
}

/// Design the filter for the segment's rate and run it.
///
/// Zero-phase specs are applied forward-backward (reflection padded); the
/// output has the same length and sampling rate as the input.
pub fn apply_filter(segment: &Segment, spec: &FilterSpec) -> Result<Segment> {
    let min_len = 3 * spec.effective_order();
    if segment.len() <= min_len {
        return Err(Error::InvalidInput(format!(
            "segment of {} samples too short for order-{} filter (need > {min_len})",
            segment.len(),
            spec.effective_order()
        )));
    }
    let filter = design_filter(spec, segment.fs())?;
    let out = if spec.zero_phase {
        filter.filtfilt(segment.samples())
    } else {
        filter.filter(segment.samples())
    };
    Segment::new(out, segment.fs())
}

/// Canonical EEG band edges in Hz: delta, theta, alpha, beta, gamma.
///
/// Bands are half-open `[lo, hi)` except gamma, which closes at 80 Hz, so
/// together they partition 1-80 Hz exactly.
pub const BAND_EDGES: [(f64, f64); 5] = [
    (1.0, 4.0),
    (4.0, 8.0),
    (8.0, 13.0),
    (13.0, 30.0),
    (30.0, 80.0),
];

pub const BAND_NAMES: [&str; 5] = ["delta", "theta", "alpha", "beta", "gamma"];

/// Fraction of 1-80 Hz periodogram power in each canonical band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPowerRatios {
    pub delta: f64,
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl BandPowerRatios {
    pub fn as_array(&self) -> [f64; 5] {
        [self.delta, self.theta, self.alpha, self.beta, self.gamma]
    }
}

/// Band-integrated PSD over the total 1-80 Hz power, band by band.
///
/// Needs fs >= 160 Hz so the gamma upper edge is resolvable.
pub fn band_power_ratios(segment: &Segment) -> Result<BandPowerRatios> {
    if segment.fs() < 160 {
        return Err(Error::InvalidInput(format!(
            "band power ratios need fs >= 160 Hz to resolve the 80 Hz edge, got {}",
            segment.fs()
        )));
    }
    let estimate = psd(segment)?;
    let mut bands = [0.0f64; 5];
    for (f, p) in estimate.freqs.iter().zip(&estimate.power) {
        for (i, &(lo, hi)) in BAND_EDGES.iter().enumerate() {
            let inside = if i == BAND_EDGES.len() - 1 {
                *f >= lo && *f <= hi
            } else {
                *f >= lo && *f < hi
            };
            if inside {
                bands[i] += p;
                break;
            }
        }
    }
    let total: f64 = bands.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateSignal(
            "no spectral power in the 1-80 Hz range".into(),
        ));
    }
    Ok(BandPowerRatios {
        delta: bands[0] / total,
        theta: bands[1] / total,
        alpha: bands[2] / total,
        beta: bands[3] / total,
        gamma: bands[4] / total,
    })
}
