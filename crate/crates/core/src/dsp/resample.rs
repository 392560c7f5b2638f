//! Rational-rate resampling.
//!
//! The rate change fs -> fs_to is reduced to up/down in lowest terms and
//! realized as a polyphase windowed-sinc convolution: conceptually insert
//! up-1 zeros between samples, lowpass below both Nyquist limits, keep
//! every down-th sample. Only taps that hit real samples are evaluated, so
//! cost scales with the output length rather than the upsampled grid.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::signal::Segment;

/// Kaiser window shape parameter; ~50 dB of stopband rejection.
const KAISER_BETA: f64 = 5.0;

/// Filter half-length per unit of max(up, down).
const TAPS_PER_PHASE: usize = 10;

/// Anti-alias cutoff as a fraction of the smaller Nyquist frequency.
const CUTOFF_FRACTION: f64 = 0.9;

/// Resample to `fs_to`, preserving duration:
/// the output holds round(len * fs_to / fs) samples.
pub fn resample(segment: &Segment, fs_to: u32) -> Result<Segment> {
    if fs_to == 0 {
        return Err(Error::InvalidInput("target rate must be positive".into()));
    }
    let fs_from = segment.fs();
    if fs_to == fs_from {
        return Ok(segment.clone());
    }

    let g = gcd(fs_from as u64, fs_to as u64);
    let up = (fs_to as u64 / g) as usize;
    let down = (fs_from as u64 / g) as usize;

    let x = segment.samples();
    let n = x.len();
    let out_len = ((n as f64) * fs_to as f64 / fs_from as f64).round() as usize;
    if out_len == 0 {
        return Err(Error::InvalidInput(format!(
            "resampling {n} samples from {fs_from} to {fs_to} Hz leaves nothing"
        )));
    }

    let half = TAPS_PER_PHASE * up.max(down);
    let taps = design_taps(up, down, half);

    // Extend the input past both ends by reflecting about a pivot value
    // (2*pivot - x[mirrored]), which keeps the extension continuous in value
    // and slope so the anti-alias convolution neither dips nor kinks at the
    // segment boundaries.
    let margin = half / up + 2;
    if margin >= n {
        return Err(Error::InvalidInput(format!(
            "{n}-sample segment is too short to resample from {fs_from} to {fs_to} Hz"
        )));
    }
    let build_ext = |pivot_head: f64, pivot_tail: f64| {
        let mut ext = Vec::with_capacity(n + 2 * margin);
        for i in (1..=margin).rev() {
            ext.push(2.0 * pivot_head - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=margin {
            ext.push(2.0 * pivot_tail - x[n - 1 - i]);
        }
        ext
    };
    // Filter value at upsampled-grid position `anchor - half` (the filter is
    // centered by its group delay of `half` grid steps).
    let convolve_at = |ext: &[f64], anchor: usize| {
        let m_hi = (anchor / up) as i64;
        // smallest m with m*up >= anchor - (taps - 1)
        let m_lo = ceil_div(anchor as i64 - (taps.len() as i64 - 1), up as i64);
        let mut acc = 0.0;
        for m in m_lo..=m_hi {
            let k = anchor as i64 - m * up as i64;
            acc += taps[k as usize] * ext[(m + margin as i64) as usize];
        }
        acc
    };

    // Reflecting about the raw edge samples would leak any above-cutoff
    // content they carry into the extension as a step the lowpass keeps.
    // Pivot on the anti-aliased edge values instead: for smooth signals the
    // pivots match the edge samples, otherwise the leak drops by the
    // filter's stopband rejection.
    let first = build_ext(x[0], x[n - 1]);
    let pivot_head = convolve_at(&first, half);
    let pivot_tail = convolve_at(&first, (n - 1) * up + half);
    let ext = build_ext(pivot_head, pivot_tail);

    // Output sample t sits at position t*down on the zero-stuffed grid.
    let out: Vec<f64> =
        crate::par::map_range(out_len, |t| convolve_at(&ext, t * down + half));

    Segment::new(out, fs_to)
}

/// Symmetric windowed-sinc lowpass of 2*half+1 taps on the upsampled grid,
/// with gain `up` to restore amplitude after zero stuffing.
fn design_taps(up: usize, down: usize, half: usize) -> Vec<f64> {
    // cutoff on the upsampled grid, as a fraction of its sample rate
    let fc = CUTOFF_FRACTION * 0.5 / up.max(down) as f64;
    let len = 2 * half + 1;
    let denom = bessel_i0(KAISER_BETA);
    (0..len)
        .map(|i| {
            let t = i as f64 - half as f64;
            let x = i as f64 / (len - 1) as f64 * 2.0 - 1.0;
            let window = bessel_i0(KAISER_BETA * (1.0 - x * x).max(0.0).sqrt()) / denom;
            2.0 * fc * sinc(2.0 * fc * t) * window * up as f64
        })
        .collect()
}

fn sinc(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        (PI * t).sin() / (PI * t)
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let half_sq = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= half_sq / (k * k) as f64;
        sum += term;
        if term < sum * 1e-16 {
            break;
        }
    }
    sum
}

/// Ceiling division for b > 0, correct for negative a.
fn ceil_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b) + if a.rem_euclid(b) != 0 { 1 } else { 0 }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, fs: u32, len: usize) -> Segment {
        let samples = (0..len)
            .map(|i| (2.0 * PI * freq * i as f64 / fs as f64).sin())
            .collect();
        Segment::new(samples, fs).unwrap()
    }

    #[test]
    fn ceil_div_both_signs() {
        assert_eq!(ceil_div(-3, 2), -1);
        assert_eq!(ceil_div(-4, 2), -2);
        assert_eq!(ceil_div(0, 2), 0);
        assert_eq!(ceil_div(3, 2), 2);
        assert_eq!(ceil_div(4, 2), 2);
    }

    #[test]
    fn rejects_segment_shorter_than_filter_margin() {
        let s = sine(3.0, 256, 16);
        // 256 -> 96: up 3, down 8 -> margin 10*8/3 + 2 = 28 > 16
        assert!(resample(&s, 96).is_err());
    }

    #[test]
    fn doubling_a_sine_preserves_it() {
        let s = sine(10.0, 256, 512);
        let out = resample(&s, 512).unwrap();
        assert_eq!(out.len(), 1024);
        assert_eq!(out.fs(), 512);
        // compare against the ideal 10 Hz sine at the new rate
        let max_err = out
            .samples()
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let ideal = (2.0 * PI * 10.0 * i as f64 / 512.0).sin();
                (y - ideal).abs()
            })
            .fold(0.0, f64::max);
        assert!(max_err < 0.02, "max deviation {max_err}");
    }

    #[test]
    fn amplitude_preserved_within_two_percent() {
        let s = sine(10.0, 256, 512);
        let out = resample(&s, 512).unwrap();
        let ratio = out.rms() / s.rms();
        assert!((ratio - 1.0).abs() < 0.02, "rms ratio {ratio}");
    }

    #[test]
    fn round_trip_within_two_percent_rms() {
        let s = sine(10.0, 256, 512);
        let back = resample(&resample(&s, 512).unwrap(), 256).unwrap();
        assert_eq!(back.len(), 512);
        let err: f64 = s
            .samples()
            .iter()
            .zip(back.samples())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / s.len() as f64;
        let rel = err.sqrt() / s.rms();
        assert!(rel < 0.02, "round-trip relative rms error {rel}");
    }

    #[test]
    fn non_integer_ratio_length() {
        // 256 -> 160: up 5, down 8; 512 * 160 / 256 = 320
        let s = sine(7.0, 256, 512);
        let out = resample(&s, 160).unwrap();
        assert_eq!(out.len(), 320);
        let max_err = out
            .samples()
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let ideal = (2.0 * PI * 7.0 * i as f64 / 160.0).sin();
                (y - ideal).abs()
            })
            .fold(0.0, f64::max);
        assert!(max_err < 0.03, "max deviation {max_err}");
    }

    #[test]
    fn downsampling_removes_aliasable_content() {
        // 100 Hz sits above the 32 Hz Nyquist of the 64 Hz target
        let fs = 256;
        let n = 1024;
        let samples: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs as f64;
                (2.0 * PI * 5.0 * t).sin() + (2.0 * PI * 100.0 * t).sin()
            })
            .collect();
        let s = Segment::new(samples, fs).unwrap();
        let out = resample(&s, 64).unwrap();
        let errs: Vec<f64> = out
            .samples()
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let ideal = (2.0 * PI * 5.0 * i as f64 / 64.0).sin();
                (y - ideal).abs()
            })
            .collect();
        // The reflected extension time-reverses whatever touches the
        // boundary; for above-cutoff content that reversal leaks a sliver of
        // energy back into the passband, so the outputs within one filter
        // half-length of the ends get a looser bound.
        let guard = 12;
        let interior = errs[guard..errs.len() - guard]
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        assert!(interior < 0.01, "alias residue {interior}");
        let edges = errs.iter().cloned().fold(0.0, f64::max);
        assert!(edges < 0.12, "edge alias residue {edges}");
    }

    #[test]
    fn identity_rate_is_a_clone() {
        let s = sine(3.0, 256, 128);
        let out = resample(&s, 256).unwrap();
        assert_eq!(out.samples(), s.samples());
    }

    #[test]
    fn rejects_zero_rate() {
        let s = sine(3.0, 256, 128);
        assert!(resample(&s, 0).is_err());
    }
}
