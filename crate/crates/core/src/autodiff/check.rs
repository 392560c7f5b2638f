//! Finite-difference verification of tape gradients.

use crate::error::{Error, Result};

use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Outcome of a [`grad_check`] run.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error across all parameter elements.
    pub max_rel_error: f64,
    /// (parameter index, element index) where the maximum occurred.
    pub worst_element: Option<(usize, usize)>,
    /// Number of elements compared.
    pub elements_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compare tape gradients against central differences.
///
/// `build` must deterministically construct a scalar loss from the given
/// parameter leaves; it is re-run twice per parameter element with that
/// element nudged by ±`epsilon`. The relative error for one element is
/// |analytic − numeric| / max(|analytic|, |numeric|, 1e-12).
pub fn grad_check<F>(params: &[Tensor], epsilon: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::InvalidInput(format!(
            "step size {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    if params.is_empty() {
        return Err(Error::InvalidInput("no parameters to check".into()));
    }

    // analytic pass
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone(), true)).collect();
    let loss = build(&mut tape, &vars)?;
    let loss_value = tape.value(loss).item()?;
    if !loss_value.is_finite() {
        return Err(Error::Numeric("loss is not finite".into()));
    }
    let grads = tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| match grads.wrt(v) {
            Some(g) => g.data().to_vec(),
            None => vec![0.0; p.len()],
        })
        .collect();

    let eval = |probe: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = probe.iter().map(|p| tape.leaf(p.clone(), true)).collect();
        let loss = build(&mut tape, &vars)?;
        let v = tape.value(loss).item()?;
        if !v.is_finite() {
            return Err(Error::Numeric("perturbed loss is not finite".into()));
        }
        Ok(v)
    };

    let mut probe: Vec<Tensor> = params.to_vec();
    let mut max_rel_error: f64 = 0.0;
    let mut worst_element = None;
    let mut elements_checked = 0;

    for (pi, param) in params.iter().enumerate() {
        for ei in 0..param.len() {
            let original = param.data()[ei];

            probe[pi].data_mut()[ei] = original + epsilon;
            let plus = eval(&probe)?;
            probe[pi].data_mut()[ei] = original - epsilon;
            let minus = eval(&probe)?;
            probe[pi].data_mut()[ei] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[pi][ei];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
            elements_checked += 1;
            if rel > max_rel_error {
                max_rel_error = rel;
                worst_element = Some((pi, ei));
            }
        }
    }

    Ok(GradCheckReport {
        max_rel_error,
        worst_element,
        elements_checked,
    })
}
