//! One-sided periodogram PSD.
//!
//! The FFT length equals the segment length (no padding, no averaging), so
//! bin k sits at k*fs/n Hz. Density normalization: interior bins are
//! doubled and every bin is divided by fs*n*U, U being the window's mean
//! square. Summing power * (fs/n) then reproduces the signal's mean square
//! exactly (discrete Parseval).

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::Segment;

/// Taper applied before the FFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsdWindow {
    /// No taper; exact Parseval bookkeeping.
    Rectangular,
    /// Hamming taper; lower leakage, slightly wider main lobe.
    Hamming,
}

/// One-sided power spectral density estimate.
#[derive(Debug, Clone)]
pub struct PsdEstimate {
    /// Bin centers in Hz, from 0 to fs/2 inclusive.
    pub freqs: Vec<f64>,
    /// Power density per bin, in input units squared per Hz.
    pub power: Vec<f64>,
    pub fs: u32,
    /// FFT length used (the segment length).
    pub nfft: usize,
}

impl PsdEstimate {
    /// Frequency step between bins.
    pub fn freq_resolution(&self) -> f64 {
        self.fs as f64 / self.nfft as f64
    }

    /// Total power: sum of density times bin width, equal to the signal's
    /// mean square for the rectangular window.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.freq_resolution()
    }
}

/// Rectangular-window periodogram of the segment.
pub fn psd(segment: &Segment) -> Result<PsdEstimate> {
    psd_with_window(segment, PsdWindow::Rectangular)
}

/// Periodogram with an explicit window choice.
pub fn psd_with_window(segment: &Segment, window: PsdWindow) -> Result<PsdEstimate> {
    let n = segment.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "PSD needs at least two samples".into(),
        ));
    }
    let fs = segment.fs() as f64;

    let taper: Vec<f64> = match window {
        PsdWindow::Rectangular => vec![1.0; n],
        PsdWindow::Hamming => (0..n)
            .map(|i| {
                0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()
            })
            .collect(),
    };
    let mean_sq_taper = taper.iter().map(|w| w * w).sum::<f64>() / n as f64;

    let mut buf: Vec<Complex64> = segment
        .samples()
        .iter()
        .zip(&taper)
        .map(|(&x, &w)| Complex64::new(x * w, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let n_bins = n / 2 + 1;
    let norm = fs * n as f64 * mean_sq_taper;
    let mut power = Vec::with_capacity(n_bins);
    let mut freqs = Vec::with_capacity(n_bins);
    for (k, bin) in buf.iter().take(n_bins).enumerate() {
        let mut p = bin.norm_sqr() / norm;
        let is_nyquist = n % 2 == 0 && k == n / 2;
        if k != 0 && !is_nyquist {
            p *= 2.0;
        }
        power.push(p);
        freqs.push(k as f64 * fs / n as f64);
    }

    Ok(PsdEstimate {
        freqs,
        power,
        fs: segment.fs(),
        nfft: n,
    })
}
