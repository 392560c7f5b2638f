//! Butterworth design and biquad-cascade filtering.
//!
//! Design path: analog lowpass prototype poles, frequency transform to the
//! requested kind at prewarped cutoffs, bilinear transform, then pairing of
//! conjugate roots into second-order sections. Running the cascade in
//! transposed direct form II keeps higher orders well conditioned where a
//! single high-degree polynomial would not be.

use num_complex::Complex64;
use std::f64::consts::PI;

use super::FilterSpec;
use crate::error::{Error, Result};

/// One second-order section, coefficients normalized so a0 = 1.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Biquad {
    pub b: [f64; 3],
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// DC-referenced steady-state gain.
    fn unit_gain(&self) -> f64 {
        let denom = 1.0 + self.a1 + self.a2;
        if denom.abs() < 1e-12 {
            0.0
        } else {
            (self.b[0] + self.b[1] + self.b[2]) / denom
        }
    }

    /// Steady-state internal state for a constant input of `level`.
    fn steady_state(&self, level: f64) -> [f64; 2] {
        let gain = self.unit_gain();
        let s2 = (self.b[2] - self.a2 * gain) * level;
        let s1 = (self.b[1] + self.b[2] - (self.a1 + self.a2) * gain) * level;
        [s1, s2]
    }

    fn response_at(&self, z_inv: Complex64) -> Complex64 {
        let num = Complex64::new(self.b[0], 0.0)
            + z_inv * (Complex64::new(self.b[1], 0.0) + z_inv * self.b[2]);
        let den = Complex64::new(1.0, 0.0)
            + z_inv * (Complex64::new(self.a1, 0.0) + z_inv * self.a2);
        num / den
    }

    /// Largest pole magnitude; < 1 means stable.
    fn pole_radius(&self) -> f64 {
        // roots of z^2 + a1 z + a2
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        let r1 = (Complex64::new(-self.a1, 0.0) + disc) / 2.0;
        let r2 = (Complex64::new(-self.a1, 0.0) - disc) / 2.0;
        r1.norm().max(r2.norm())
    }
}

/// A designed recursive filter bound to the sampling rate it was built for.
#[derive(Debug, Clone)]
pub struct IirFilter {
    sections: Vec<Biquad>,
    fs: u32,
}

/// Build a Butterworth cascade realizing `spec` at sampling rate `fs`.
pub fn design_filter(spec: &FilterSpec, fs: u32) -> Result<IirFilter> {
    spec.validate(fs)?;
    let fs_f = fs as f64;
    // Map the requested cutoffs to the analog frequencies that land back on
    // them after the bilinear transform.
    let warped: Vec<f64> = spec
        .cutoffs_hz
        .iter()
        .map(|&c| 2.0 * fs_f * (PI * c / fs_f).tan())
        .collect();

    let prototype = butter_prototype(spec.order);
    let analog = match spec.kind {
        super::FilterKind::Lowpass => lowpass_transform(&prototype, warped[0]),
        super::FilterKind::Highpass => highpass_transform(&prototype, warped[0]),
        super::FilterKind::Bandpass => {
            band_transform(&prototype, warped[0], warped[1], false)
        }
        super::FilterKind::Bandstop => {
            band_transform(&prototype, warped[0], warped[1], true)
        }
    };
    let digital = bilinear(&analog, fs_f);
    let sections = pair_into_sections(&digital)?;

    let filter = IirFilter { sections, fs };
    let radius = filter.max_pole_radius();
    if radius >= 1.0 {
        return Err(Error::Numeric(format!(
            "designed filter is unstable (pole radius {radius})"
        )));
    }
    Ok(filter)
}

impl IirFilter {
    pub fn fs(&self) -> u32 {
        self.fs
    }

    pub fn num_sections(&self) -> usize {
        self.sections.len()
    }

    /// Largest pole magnitude across sections.
    pub fn max_pole_radius(&self) -> f64 {
        self.sections
            .iter()
            .map(Biquad::pole_radius)
            .fold(0.0, f64::max)
    }

    /// Single forward pass from zero initial state.
    pub fn filter(&self, input: &[f64]) -> Vec<f64> {
        let mut out = input.to_vec();
        for section in &self.sections {
            let mut state = [0.0f64; 2];
            run_section(section, &mut out, &mut state);
        }
        out
    }

    /// Forward-backward pass: zero phase, squared magnitude response.
    ///
    /// The segment is extended on both ends by an odd reflection and each
    /// pass starts from the steady state for its first sample, which keeps
    /// startup transients out of the retained span.
    pub fn filtfilt(&self, input: &[f64]) -> Vec<f64> {
        let n = input.len();
        // Edge transients decay over the filter's settling span, which for
        // sharp low-cutoff designs runs well past the classic three-sample
        // rule per coefficient, so give each section a generous margin.
        let pad = (24 * self.sections.len()).min(n.saturating_sub(1));

        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(2.0 * input[0] - input[i]);
        }
        ext.extend_from_slice(input);
        for i in 1..=pad {
            ext.push(2.0 * input[n - 1] - input[n - 1 - i]);
        }

        self.run_from_steady_state(&mut ext);
        ext.reverse();
        self.run_from_steady_state(&mut ext);
        ext.reverse();

        ext[pad..pad + n].to_vec()
    }

    fn run_from_steady_state(&self, buf: &mut [f64]) {
        if buf.is_empty() {
            return;
        }
        // The steady input level seen by section k is the original first
        // sample attenuated by the unit gains of the sections before it.
        let mut level = buf[0];
        for section in &self.sections {
            let mut state = section.steady_state(level);
            level *= section.unit_gain();
            run_section(section, buf, &mut state);
        }
    }

    /// Magnitude response at `freq_hz`.
    pub fn magnitude_at(&self, freq_hz: f64) -> f64 {
        let omega = 2.0 * PI * freq_hz / self.fs as f64;
        let z_inv = Complex64::from_polar(1.0, -omega);
        self.sections
            .iter()
            .map(|s| s.response_at(z_inv).norm())
            .product()
    }
}

fn run_section(section: &Biquad, buf: &mut [f64], state: &mut [f64; 2]) {
    let [b0, b1, b2] = section.b;
    let (a1, a2) = (section.a1, section.a2);
    for x in buf.iter_mut() {
        let input = *x;
        let y = b0 * input + state[0];
        state[0] = b1 * input - a1 * y + state[1];
        state[1] = b2 * input - a2 * y;
        *x = y;
    }
}

/// Zeros, poles, and gain of a filter stage.
struct Zpk {
    zeros: Vec<Complex64>,
    poles: Vec<Complex64>,
    gain: f64,
}

/// Analog Butterworth lowpass prototype: unit cutoff, unit gain, no zeros.
fn butter_prototype(order: usize) -> Zpk {
    let poles = (0..order)
        .map(|k| {
            let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect();
    Zpk {
        zeros: Vec::new(),
        poles,
        gain: 1.0,
    }
}

fn lowpass_transform(proto: &Zpk, cutoff: f64) -> Zpk {
    let degree = proto.poles.len() - proto.zeros.len();
    Zpk {
        zeros: proto.zeros.iter().map(|z| z * cutoff).collect(),
        poles: proto.poles.iter().map(|p| p * cutoff).collect(),
        gain: proto.gain * cutoff.powi(degree as i32),
    }
}

fn highpass_transform(proto: &Zpk, cutoff: f64) -> Zpk {
    let degree = proto.poles.len() - proto.zeros.len();
    let mut zeros: Vec<Complex64> = proto.zeros.iter().map(|z| cutoff / z).collect();
    let poles: Vec<Complex64> = proto.poles.iter().map(|p| cutoff / p).collect();
    zeros.extend(std::iter::repeat(Complex64::ZERO).take(degree));
    let num: Complex64 = proto.zeros.iter().map(|z| -z).product();
    let den: Complex64 = proto.poles.iter().map(|p| -p).product();
    Zpk {
        zeros,
        poles,
        gain: proto.gain * (num / den).re,
    }
}

/// Lowpass-to-bandpass or lowpass-to-bandstop, doubling the order.
fn band_transform(proto: &Zpk, low: f64, high: f64, stop: bool) -> Zpk {
    let bw = high - low;
    let center_sq = low * high;
    let degree = proto.poles.len() - proto.zeros.len();

    let split = |roots: &[Complex64], invert: bool| -> Vec<Complex64> {
        let mut out = Vec::with_capacity(roots.len() * 2);
        for &r in roots {
            let scaled = if invert {
                Complex64::new(bw / 2.0, 0.0) / r
            } else {
                r * (bw / 2.0)
            };
            let offset = (scaled * scaled - center_sq).sqrt();
            out.push(scaled + offset);
            out.push(scaled - offset);
        }
        out
    };

    if stop {
        let mut zeros = split(&proto.zeros, true);
        let poles = split(&proto.poles, true);
        let center = center_sq.sqrt();
        for _ in 0..degree {
            zeros.push(Complex64::new(0.0, center));
            zeros.push(Complex64::new(0.0, -center));
        }
        let num: Complex64 = proto.zeros.iter().map(|z| -z).product();
        let den: Complex64 = proto.poles.iter().map(|p| -p).product();
        Zpk {
            zeros,
            poles,
            gain: proto.gain * (num / den).re,
        }
    } else {
        let mut zeros = split(&proto.zeros, false);
        let poles = split(&proto.poles, false);
        zeros.extend(std::iter::repeat(Complex64::ZERO).take(degree));
        Zpk {
            zeros,
            poles,
            gain: proto.gain * bw.powi(degree as i32),
        }
    }
}

/// Map analog roots to the digital plane; unmatched degree becomes zeros at
/// z = -1 (the image of infinite frequency).
fn bilinear(analog: &Zpk, fs: f64) -> Zpk {
    let fs2 = Complex64::new(2.0 * fs, 0.0);
    let map = |r: &Complex64| (fs2 + r) / (fs2 - r);

    let degree = analog.poles.len() - analog.zeros.len();
    let mut zeros: Vec<Complex64> = analog.zeros.iter().map(map).collect();
    let poles: Vec<Complex64> = analog.poles.iter().map(map).collect();
    zeros.extend(std::iter::repeat(Complex64::new(-1.0, 0.0)).take(degree));

    let num: Complex64 = analog.zeros.iter().map(|z| fs2 - z).product();
    let den: Complex64 = analog.poles.iter().map(|p| fs2 - p).product();
    Zpk {
        zeros,
        poles,
        gain: analog.gain * (num / den).re,
    }
}

/// Split a conjugate-symmetric root set into upper-half-plane
/// representatives and real roots.
fn split_conjugates(roots: &[Complex64], label: &str) -> Result<(Vec<Complex64>, Vec<f64>)> {
    let mut uppers = Vec::new();
    let mut lowers = Vec::new();
    let mut reals = Vec::new();
    for &r in roots {
        let tol = 1e-8 * r.norm().max(1.0);
        if r.im > tol {
            uppers.push(r);
        } else if r.im < -tol {
            lowers.push(r);
        } else {
            reals.push(r.re);
        }
    }
    if uppers.len() != lowers.len() {
        return Err(Error::Numeric(format!(
            "{label} are not conjugate symmetric ({} upper vs {} lower)",
            uppers.len(),
            lowers.len()
        )));
    }
    let key = |c: &Complex64| (c.re, c.im.abs());
    uppers.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
    reals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((uppers, reals))
}

/// Root pair destined for one section: either a conjugate pair encoded by
/// its upper-half representative, two reals, or a lone real.
#[derive(Debug, Clone, Copy)]
enum RootPair {
    Conjugate(Complex64),
    Reals(f64, f64),
    Single(f64),
}

impl RootPair {
    fn representative(&self) -> Complex64 {
        match *self {
            RootPair::Conjugate(c) => c,
            RootPair::Reals(a, b) => Complex64::new((a + b) / 2.0, 0.0),
            RootPair::Single(a) => Complex64::new(a, 0.0),
        }
    }

    /// Monic quadratic (or linear) coefficients [1, c1, c2].
    fn poly(&self) -> [f64; 3] {
        match *self {
            RootPair::Conjugate(c) => [1.0, -2.0 * c.re, c.norm_sqr()],
            RootPair::Reals(a, b) => [1.0, -(a + b), a * b],
            RootPair::Single(a) => [1.0, -a, 0.0],
        }
    }

    fn is_single(&self) -> bool {
        matches!(self, RootPair::Single(_))
    }
}

fn pair_up(roots: &[Complex64], label: &str) -> Result<Vec<RootPair>> {
    let (uppers, reals) = split_conjugates(roots, label)?;
    let mut pairs: Vec<RootPair> = uppers.into_iter().map(RootPair::Conjugate).collect();
    // Pair outermost-with-innermost so e.g. a set of +1 and -1 zeros yields
    // balanced (z-1)(z+1) sections.
    let mut reals = reals;
    while reals.len() >= 2 {
        let hi = reals.pop().unwrap();
        let lo = reals.remove(0);
        pairs.push(RootPair::Reals(lo, hi));
    }
    if let Some(last) = reals.pop() {
        pairs.push(RootPair::Single(last));
    }
    Ok(pairs)
}

/// Greedy conjugate pairing of zeros to poles into biquad sections.
///
/// Pole pairs closest to the unit circle claim their nearest zero pair
/// first, which minimizes peak intermediate gain through the cascade.
fn pair_into_sections(zpk: &Zpk) -> Result<Vec<Biquad>> {
    if zpk.zeros.len() != zpk.poles.len() {
        return Err(Error::Numeric(
            "digital zero and pole counts differ".into(),
        ));
    }
    let mut pole_pairs = pair_up(&zpk.poles, "poles")?;
    let mut zero_pairs = pair_up(&zpk.zeros, "zeros")?;
    if pole_pairs.len() != zero_pairs.len()
        || pole_pairs.iter().filter(|p| p.is_single()).count()
            != zero_pairs.iter().filter(|z| z.is_single()).count()
    {
        return Err(Error::Numeric("root pairing is unbalanced".into()));
    }

    pole_pairs.sort_by(|a, b| {
        let ra = a.representative().norm();
        let rb = b.representative().norm();
        rb.partial_cmp(&ra).unwrap()
    });

    let mut sections = Vec::with_capacity(pole_pairs.len());
    for pole_pair in pole_pairs {
        let anchor = pole_pair.representative();
        let idx = zero_pairs
            .iter()
            .enumerate()
            .filter(|(_, z)| z.is_single() == pole_pair.is_single())
            .min_by(|(_, x), (_, y)| {
                let dx = (x.representative() - anchor).norm();
                let dy = (y.representative() - anchor).norm();
                dx.partial_cmp(&dy).unwrap()
            })
            .map(|(i, _)| i)
            .expect("pairing counts were checked");
        let zero_pair = zero_pairs.remove(idx);

        let b = zero_pair.poly();
        let a = pole_pair.poly();
        sections.push(Biquad {
            b,
            a1: a[1],
            a2: a[2],
        });
    }

    // Fold the overall gain into the first section's numerator.
    if let Some(first) = sections.first_mut() {
        for c in &mut first.b {
            *c *= zpk.gain;
        }
    } else {
        return Err(Error::Numeric("design produced no sections".into()));
    }
    Ok(sections)
}
