//! Parameter layout and seeded initialization.
//!
//! Each architecture is described by an ordered list of [`ParamPlan`]s; the
//! forward builders in `forward.rs` consume parameters in exactly this order,
//! so the two files must stay in lockstep. Initialization draws every element
//! sequentially from one seeded generator, which makes a model a pure
//! function of (spec, seed).

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;

use super::{Architecture, ModelSpec};

/// How a parameter tensor is filled at construction time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(super) enum InitRule {
    /// Uniform over ±sqrt(6 / fan_in); used for weights feeding a ReLU.
    HeUniform { fan_in: usize },
    /// Uniform over ±sqrt(6 / (fan_in + fan_out)); used for linear outputs
    /// and recurrent maps.
    XavierUniform { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
    /// Concatenated LSTM gate biases in [input, forget, cell, output] order
    /// with the forget block at 1.0 so a fresh cell starts out retaining its
    /// state.
    LstmBias { hidden: usize },
}

/// One named parameter tensor: shape plus fill rule.
#[derive(Debug, Clone)]
pub(super) struct ParamPlan {
    pub name: String,
    pub shape: Vec<usize>,
    pub rule: InitRule,
}

impl ParamPlan {
    fn new(name: impl Into<String>, shape: Vec<usize>, rule: InitRule) -> Self {
        ParamPlan {
            name: name.into(),
            shape,
            rule,
        }
    }
}

fn he(fan_in: usize) -> InitRule {
    InitRule::HeUniform { fan_in }
}

fn xavier(fan_in: usize, fan_out: usize) -> InitRule {
    InitRule::XavierUniform { fan_in, fan_out }
}

/// Dense layer: weight `[in, out]` plus row-broadcast bias `[1, out]`.
fn dense(plans: &mut Vec<ParamPlan>, name: &str, fan_in: usize, fan_out: usize, rule: InitRule) {
    plans.push(ParamPlan::new(
        format!("{name}_weight"),
        vec![fan_in, fan_out],
        rule,
    ));
    plans.push(ParamPlan::new(
        format!("{name}_bias"),
        vec![1, fan_out],
        InitRule::Zeros,
    ));
}

/// Batch-norm site: gain and shift, both channel-broadcast `[1, C, 1]`.
fn norm(plans: &mut Vec<ParamPlan>, name: &str, channels: usize) {
    plans.push(ParamPlan::new(
        format!("{name}_gain"),
        vec![1, channels, 1],
        InitRule::Ones,
    ));
    plans.push(ParamPlan::new(
        format!("{name}_shift"),
        vec![1, channels, 1],
        InitRule::Zeros,
    ));
}

/// Ordered parameter plans for a validated spec.
pub(super) fn plans(spec: &ModelSpec) -> Vec<ParamPlan> {
    let n = spec.input_len;
    let mut out = Vec::new();
    match spec.architecture {
        Architecture::Fcnn => {
            for layer in 0..4 {
                dense(&mut out, &format!("dense{layer}"), n, n, he(n));
            }
            dense(&mut out, "dense4", n, n, xavier(n, n));
        }
        Architecture::SimpleCnn => {
            let f = spec.feature_maps;
            let mut channels_in = 1;
            for layer in 0..4 {
                out.push(ParamPlan::new(
                    format!("conv{layer}_kernel"),
                    vec![f, channels_in, 3],
                    he(3 * channels_in),
                ));
                norm(&mut out, &format!("norm{layer}"), f);
                channels_in = f;
            }
            dense(&mut out, "head", f * n, n, xavier(f * n, n));
        }
        Architecture::ComplexCnn => {
            let w = spec.branch_width;
            out.push(ParamPlan::new("stem_kernel", vec![w, 1, 3], he(3)));
            for kernel in [3usize, 5, 7] {
                for block in 0..2 {
                    let base = format!("branch{kernel}_block{block}");
                    out.push(ParamPlan::new(
                        format!("{base}_conv0_kernel"),
                        vec![w, w, kernel],
                        he(kernel * w),
                    ));
                    norm(&mut out, &format!("{base}_norm0"), w);
                    out.push(ParamPlan::new(
                        format!("{base}_conv1_kernel"),
                        vec![w, w, kernel],
                        he(kernel * w),
                    ));
                    norm(&mut out, &format!("{base}_norm1"), w);
                }
            }
            out.push(ParamPlan::new(
                "merge_kernel",
                vec![w, 3 * w, 1],
                xavier(3 * w, w),
            ));
            out.push(ParamPlan::new("merge_bias", vec![1, w, 1], InitRule::Zeros));
            dense(&mut out, "head", w * n, n, xavier(w * n, n));
        }
        Architecture::Rnn => {
            let h = spec.rnn_hidden;
            out.push(ParamPlan::new(
                "lstm_input_weight",
                vec![1, 4 * h],
                xavier(1, 4 * h),
            ));
            out.push(ParamPlan::new(
                "lstm_hidden_weight",
                vec![h, 4 * h],
                xavier(h, 4 * h),
            ));
            out.push(ParamPlan::new(
                "lstm_bias",
                vec![1, 4 * h],
                InitRule::LstmBias { hidden: h },
            ));
            dense(&mut out, "head0", n * h, n, he(n * h));
            dense(&mut out, "head1", n, n, he(n));
            dense(&mut out, "head2", n, n, xavier(n, n));
        }
    }
    out
}

/// Channel count of each batch-norm site, in forward order. Empty for
/// architectures without normalization.
pub(super) fn norm_channels(spec: &ModelSpec) -> Vec<usize> {
    match spec.architecture {
        Architecture::Fcnn | Architecture::Rnn => Vec::new(),
        Architecture::SimpleCnn => vec![spec.feature_maps; 4],
        // two sites per residual block, two blocks per branch, three branches
        Architecture::ComplexCnn => vec![spec.branch_width; 12],
    }
}

/// Materialize all parameter tensors for `spec`, drawn from a generator
/// seeded with `seed`.
pub(super) fn init_params(spec: &ModelSpec, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    plans(spec)
        .iter()
        .map(|plan| {
            let len: usize = plan.shape.iter().product();
            let data: Vec<f64> = match plan.rule {
                InitRule::HeUniform { fan_in } => {
                    let limit = (6.0 / fan_in as f64).sqrt();
                    (0..len).map(|_| rng.random_range(-limit..limit)).collect()
                }
                InitRule::XavierUniform { fan_in, fan_out } => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..len).map(|_| rng.random_range(-limit..limit)).collect()
                }
                InitRule::Zeros => vec![0.0; len],
                InitRule::Ones => vec![1.0; len],
                InitRule::LstmBias { hidden } => {
                    let mut bias = vec![0.0; len];
                    bias[hidden..2 * hidden].fill(1.0);
                    bias
                }
            };
            Tensor::new(plan.shape.clone(), data).expect("plan shape matches data length")
        })
        .collect()
}
