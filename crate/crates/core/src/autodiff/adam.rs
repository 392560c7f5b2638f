//! Adam parameter updates with bias-corrected moments.

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Adam hyperparameters. Defaults match the training setup used throughout
/// the benchmark: a small learning rate with a low first-moment decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 5e-5,
            beta1: 0.5,
            beta2: 0.9,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(mut self, learning_rate: f64) -> Self {
        self.learning_rate = learning_rate;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::ModelSpec(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::ModelSpec(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::ModelSpec("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Optimizer state: one first and second moment buffer per parameter.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, param_sizes: &[usize]) -> Result<Self> {
        config.validate()?;
        Ok(Adam {
            config,
            step_count: 0,
            first_moment: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Apply one update. `grads[i]` must have the same element count as
    /// `params[i]`; a `None` gradient leaves that parameter untouched while
    /// still decaying its moments.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Option<&Tensor>]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "optimizer tracks {} parameters, got {} params and {} grads",
                    self.first_moment.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        for (i, p) in params.iter().enumerate() {
            if p.len() != self.first_moment[i].len() {
                return Err(Error::shape(
                    "adam_step",
                    format!(
                        "parameter {i} has {} elements, optimizer state has {}",
                        p.len(),
                        self.first_moment[i].len()
                    ),
                ));
            }
            if let Some(g) = grads[i] {
                if g.len() != p.len() {
                    return Err(Error::shape(
                        "adam_step",
                        format!(
                            "gradient {i} has {} elements, parameter has {}",
                            g.len(),
                            p.len()
                        ),
                    ));
                }
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);

        for (i, param) in params.iter_mut().enumerate() {
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            let zero = 0.0;
            for (j, p) in param.data_mut().iter_mut().enumerate() {
                let g = grads[i].map_or(zero, |g| g.data()[j]);
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_signed_rate() {
        let cfg = AdamConfig::default().with_learning_rate(1e-3);
        let mut opt = Adam::new(cfg, &[2]).unwrap();
        let mut params = vec![Tensor::new(vec![2], vec![1.0, -4.0]).unwrap()];
        let grad = Tensor::new(vec![2], vec![0.5, -2.0]).unwrap();
        opt.step(&mut params, &[Some(&grad)]).unwrap();
        // m_hat = g, v_hat = g^2, so the move is lr * sign(g) up to epsilon
        let got = params[0].data();
        assert!((got[0] - (1.0 - 1e-3)).abs() < 1e-9, "{}", got[0]);
        assert!((got[1] - (-4.0 + 1e-3)).abs() < 1e-9, "{}", got[1]);
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut opt = Adam::new(AdamConfig::default(), &[3]).unwrap();
        let mut params = vec![Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap()];
        let zero = Tensor::zeros(vec![3]);
        opt.step(&mut params, &[Some(&zero)]).unwrap();
        assert_eq!(params[0].data(), &[1.0, 2.0, 3.0]);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut opt =
                Adam::new(AdamConfig::default().with_learning_rate(0.05), &[2]).unwrap();
            let mut params = vec![Tensor::new(vec![2], vec![4.0, -3.0]).unwrap()];
            for _ in 0..25 {
                // gradient of mean((p - [1, 2])^2)
                let g: Vec<f64> = params[0]
                    .data()
                    .iter()
                    .zip([1.0, 2.0])
                    .map(|(p, t)| p - t)
                    .collect();
                let g = Tensor::new(vec![2], g).unwrap();
                opt.step(&mut params, &[Some(&g)]).unwrap();
            }
            params[0].data().to_vec()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }

    #[test]
    fn converges_on_quadratic_bowl() {
        let mut opt = Adam::new(AdamConfig::default().with_learning_rate(0.1), &[1]).unwrap();
        let mut params = vec![Tensor::scalar(8.0)];
        for _ in 0..500 {
            let g = Tensor::scalar(2.0 * (params[0].data()[0] - 3.0));
            opt.step(&mut params, &[Some(&g)]).unwrap();
        }
        assert!((params[0].data()[0] - 3.0).abs() < 0.05);
    }

    #[test]
    fn rejects_mismatched_state() {
        let mut opt = Adam::new(AdamConfig::default(), &[2]).unwrap();
        let mut params = vec![Tensor::zeros(vec![3])];
        let g = Tensor::zeros(vec![3]);
        assert!(opt.step(&mut params, &[Some(&g)]).is_err());

        let bad_cfg = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(Adam::new(bad_cfg, &[2]).is_err());
    }
}
