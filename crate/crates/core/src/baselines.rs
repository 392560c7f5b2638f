//! Traditional denoising comparators: empirical mode decomposition with
//! cluster-based component rejection, and fixed-band zero-phase filtering.

use crate::dataset::ArtifactType;
use crate::dsp::{apply_filter, psd, FilterSpec};
use crate::error::{Error, Result};
use crate::metrics::Denoiser;
use crate::signal::Segment;

/// Knobs for the decomposition and the component-rejection rule.
#[derive(Debug, Clone)]
pub struct EmdConfig {
    pub max_imfs: usize,
    /// Sifting stops once sum(mean_envelope^2) / sum(h^2) drops below this.
    pub sift_threshold: f64,
    pub max_sift_iters: usize,
}

impl Default for EmdConfig {
    fn default() -> Self {
        EmdConfig {
            max_imfs: 10,
            sift_threshold: 0.2,
            max_sift_iters: 100,
        }
    }
}

impl EmdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_imfs == 0 {
            return Err(Error::InvalidInput("max_imfs must be at least 1".into()));
        }
        if !(self.sift_threshold > 0.0) {
            return Err(Error::InvalidInput(
                "sift threshold must be positive".into(),
            ));
        }
        if self.max_sift_iters == 0 {
            return Err(Error::InvalidInput(
                "max sift iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Decomposition result: oscillatory modes ordered fastest first, plus the
/// leftover trend.
#[derive(Debug, Clone)]
pub struct ImfSet {
    pub imfs: Vec<Segment>,
    pub residual: Segment,
}

/// Interior local maxima and minima, flat runs contributing their midpoint.
fn local_extrema(x: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    // (end index, direction) of each nonzero step
    let mut prev: Option<(usize, i8)> = None;
    for i in 1..x.len() {
        let d = x[i] - x[i - 1];
        if d == 0.0 {
            continue;
        }
        let sign = if d > 0.0 { 1 } else { -1 };
        if let Some((at, prev_sign)) = prev {
            // extremum spans the flat run [at, i-1]; take its midpoint
            let pos = (at + i - 1) / 2;
            if prev_sign == 1 && sign == -1 {
                maxima.push(pos);
            } else if prev_sign == -1 && sign == 1 {
                minima.push(pos);
            }
        }
        prev = Some((i, sign));
    }
    (maxima, minima)
}

/// Natural cubic spline through strictly increasing knots, evaluated on the
/// integer grid 0..n.
fn spline_on_grid(ts: &[f64], vs: &[f64], n: usize) -> Vec<f64> {
    let k = ts.len();
    if k == 1 {
        return vec![vs[0]; n];
    }
    // second derivatives at the knots (natural: zero at both ends), via the
    // tridiagonal system solved in place
    let mut second = vec![0.0; k];
    if k > 2 {
        let mut diag = vec![0.0; k];
        let mut upper = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 1..k - 1 {
            let h0 = ts[i] - ts[i - 1];
            let h1 = ts[i + 1] - ts[i];
            let sub = h0;
            let mut b = 2.0 * (h0 + h1);
            let mut d = 6.0 * ((vs[i + 1] - vs[i]) / h1 - (vs[i] - vs[i - 1]) / h0);
            if i > 1 {
                let w = sub / diag[i - 1];
                b -= w * upper[i - 1];
                d -= w * rhs[i - 1];
            }
            diag[i] = b;
            upper[i] = h1;
            rhs[i] = d;
        }
        second[k - 2] = rhs[k - 2] / diag[k - 2];
        for i in (1..k - 2).rev() {
            second[i] = (rhs[i] - upper[i] * second[i + 1]) / diag[i];
        }
    }
    let mut out = vec![0.0; n];
    let mut seg = 0usize;
    for (i, o) in out.iter_mut().enumerate() {
        let xi = i as f64;
        while seg + 2 < k && ts[seg + 1] < xi {
            seg += 1;
        }
        let h = ts[seg + 1] - ts[seg];
        let u = (ts[seg + 1] - xi) / h;
        let w = (xi - ts[seg]) / h;
        *o = u * vs[seg]
            + w * vs[seg + 1]
            + ((u * u * u - u) * second[seg] + (w * w * w - w) * second[seg + 1]) * h * h / 6.0;
    }
    out
}

/// Envelope through the extrema at `pos`, anchored beyond both ends by
/// mirroring up to two boundary extrema about the end samples.
fn envelope(x: &[f64], pos: &[usize], n: usize) -> Vec<f64> {
    let mut ts = Vec::with_capacity(pos.len() + 4);
    let mut vs = Vec::with_capacity(pos.len() + 4);
    for k in (0..pos.len().min(2)).rev() {
        if pos[k] > 0 {
            ts.push(-(pos[k] as f64));
            vs.push(x[pos[k]]);
        }
    }
    for &p in pos {
        ts.push(p as f64);
        vs.push(x[p]);
    }
    let last = (n - 1) as f64;
    for k in (pos.len().saturating_sub(2)..pos.len()).rev() {
        if (pos[k] as f64) < last {
            ts.push(2.0 * last - pos[k] as f64);
            vs.push(x[pos[k]]);
        }
    }
    spline_on_grid(&ts, &vs, n)
}

/// Classic sifting decomposition.
///
/// Each pass subtracts the envelope midline until the stop criterion fires,
/// yielding one mode; modes are peeled off until the leftover is too smooth
/// to oscillate or the mode budget is spent. The modes plus residual sum to
/// the input exactly by construction.
pub fn emd(segment: &Segment, cfg: &EmdConfig) -> Result<ImfSet> {
    cfg.validate()?;
    let x = segment.samples();
    let n = x.len();
    let (maxima, minima) = local_extrema(x);
    if maxima.len() + minima.len() < 4 {
        return Err(Error::Decomposition(format!(
            "need at least 4 extrema to decompose, found {}",
            maxima.len() + minima.len()
        )));
    }
    let fs = segment.fs();
    let mut residual: Vec<f64> = x.to_vec();
    let mut imfs = Vec::new();
    while imfs.len() < cfg.max_imfs {
        let (mx, mn) = local_extrema(&residual);
        if mx.len() < 2 || mn.len() < 2 {
            break;
        }
        let mut h = residual.clone();
        for _ in 0..cfg.max_sift_iters {
            let (hmx, hmn) = local_extrema(&h);
            if hmx.len() < 2 || hmn.len() < 2 {
                break;
            }
            let upper = envelope(&h, &hmx, n);
            let lower = envelope(&h, &hmn, n);
            let denom: f64 = h.iter().map(|v| v * v).sum();
            if denom == 0.0 {
                break;
            }
            let mut shift = 0.0;
            for i in 0..n {
                let m = 0.5 * (upper[i] + lower[i]);
                shift += m * m;
                h[i] -= m;
            }
            if shift / denom < cfg.sift_threshold {
                break;
            }
        }
        for (r, v) in residual.iter_mut().zip(&h) {
            *r -= v;
        }
        imfs.push(Segment::new(h, fs)?);
    }
    Ok(ImfSet {
        imfs,
        residual: Segment::new(residual, fs)?,
    })
}

/// Power-weighted mean frequency of the one-sided periodogram; 0 for a
/// powerless segment.
fn spectral_centroid(segment: &Segment) -> f64 {
    match psd(segment) {
        Ok(est) => {
            let total: f64 = est.power.iter().sum();
            if total == 0.0 {
                0.0
            } else {
                est.freqs
                    .iter()
                    .zip(&est.power)
                    .map(|(f, p)| f * p)
                    .sum::<f64>()
                    / total
            }
        }
        Err(_) => 0.0,
    }
}

/// 1-D 2-means; true marks membership of the higher-centered cluster.
/// Equidistant points go low, so the result is deterministic.
fn high_cluster_mask(values: &[f64]) -> Vec<bool> {
    let mut lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut mask = vec![false; values.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (m, &v) in mask.iter_mut().zip(values) {
            let assign_high = (v - hi).abs() < (v - lo).abs();
            if *m != assign_high {
                *m = assign_high;
                changed = true;
            }
        }
        for high in [false, true] {
            let members: Vec<f64> = mask
                .iter()
                .zip(values)
                .filter(|(m, _)| **m == high)
                .map(|(_, &v)| v)
                .collect();
            if !members.is_empty() {
                let mean = members.iter().sum::<f64>() / members.len() as f64;
                if high {
                    hi = mean;
                } else {
                    lo = mean;
                }
            }
        }
        if !changed {
            break;
        }
    }
    mask
}

/// Decompose, split the modes into a fast and a slow cluster by spectral
/// centroid, and rebuild without the artifact side: slow modes and the
/// residual trend for ocular artifacts, fast modes for myogenic ones.
///
/// Returns the cleaned segment and a flag that is true when decomposition
/// failed and the input was passed through untouched.
pub fn emd_denoise(
    segment: &Segment,
    artifact: ArtifactType,
    cfg: &EmdConfig,
) -> (Segment, bool) {
    let set = match emd(segment, cfg) {
        Ok(set) => set,
        Err(_) => return (segment.clone(), true),
    };
    let centroids: Vec<f64> = set.imfs.iter().map(spectral_centroid).collect();
    let high = high_cluster_mask(&centroids);
    let mut keep: Vec<bool> = match artifact {
        ArtifactType::Ocular => high,
        ArtifactType::Myogenic => high.iter().map(|h| !h).collect(),
    };
    // No separation evidence (all centroids tied leaves the ocular keep set
    // empty): retain the single most signal-like mode instead of nothing.
    if keep.iter().all(|k| !k) && !centroids.is_empty() {
        let best = centroids
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        keep[best] = true;
    }
    let mut out = vec![0.0; segment.len()];
    for (imf, kept) in set.imfs.iter().zip(&keep) {
        if *kept {
            for (o, v) in out.iter_mut().zip(imf.samples()) {
                *o += v;
            }
        }
    }
    // The residual is the slowest component of all: artifact-like for
    // ocular contamination, signal-like for myogenic.
    if artifact == ArtifactType::Myogenic {
        for (o, v) in out.iter_mut().zip(set.residual.samples()) {
            *o += v;
        }
    }
    (
        Segment::new(out, segment.fs()).expect("rebuild preserves shape"),
        false,
    )
}

/// Fixed-band comparator: zero-phase high-pass at 12 Hz for ocular
/// artifacts, zero-phase band-pass 12-40 Hz for myogenic ones.
pub fn filter_denoise(segment: &Segment, artifact: ArtifactType) -> Result<Segment> {
    let spec = match artifact {
        ArtifactType::Ocular => FilterSpec::highpass(12.0, 4),
        ArtifactType::Myogenic => FilterSpec::bandpass(12.0, 40.0, 4),
    };
    apply_filter(segment, &spec)
}

/// The filtering comparator as an evaluable method.
#[derive(Debug, Clone)]
pub struct FilterBaseline {
    pub artifact: ArtifactType,
}

impl Denoiser for FilterBaseline {
    fn name(&self) -> &str {
        "filter"
    }
    fn denoise(&self, contaminated: &Segment) -> Result<Segment> {
        filter_denoise(contaminated, self.artifact)
    }
}

/// The decomposition comparator as an evaluable method. Decomposition
/// failure degrades to passthrough rather than erroring, matching
/// [`emd_denoise`].
#[derive(Debug, Clone)]
pub struct EmdBaseline {
    pub artifact: ArtifactType,
    pub config: EmdConfig,
}

impl EmdBaseline {
    pub fn new(artifact: ArtifactType) -> Self {
        EmdBaseline {
            artifact,
            config: EmdConfig::default(),
        }
    }
}

impl Denoiser for EmdBaseline {
    fn name(&self) -> &str {
        "emd"
    }
    fn denoise(&self, contaminated: &Segment) -> Result<Segment> {
        Ok(emd_denoise(contaminated, self.artifact, &self.config).0)
    }
}
