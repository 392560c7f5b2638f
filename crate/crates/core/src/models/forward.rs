//! Graph construction for the four architectures.
//!
//! One builder per architecture, all consuming parameters positionally in
//! the order `init::plans` declares them. The same code path serves
//! training, validation, inference, and gradient checking; the behavioral
//! differences (batch statistics vs running statistics, dropout on or off)
//! are isolated in [`ForwardCtx`].

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{BatchStats, Tape, Var};
use crate::error::{Error, Result};

use super::{Architecture, ModelSpec, RunningNorm};

/// Epsilon added to the variance in both batch-norm modes.
pub(super) const NORM_EPS: f64 = 1e-5;

enum NormMode<'a> {
    /// Batch statistics flow through the graph; each site pushes its stats
    /// so the trainer can fold them into the running averages afterwards.
    Train { collected: &'a mut Vec<BatchStats> },
    /// Running statistics folded into a fixed per-channel affine.
    Eval {
        running: &'a [RunningNorm],
        cursor: usize,
    },
}

/// Per-call forward configuration.
pub(super) struct ForwardCtx<'a> {
    norm: NormMode<'a>,
    /// Source of dropout keep masks; `None` runs every dropout site as the
    /// identity (inference, validation, gradient checks).
    dropout_rng: Option<&'a mut ChaCha8Rng>,
    keep_prob: f64,
}

impl<'a> ForwardCtx<'a> {
    pub(super) fn train(
        collected: &'a mut Vec<BatchStats>,
        dropout_rng: Option<&'a mut ChaCha8Rng>,
        dropout_rate: f64,
    ) -> Self {
        ForwardCtx {
            norm: NormMode::Train { collected },
            dropout_rng,
            keep_prob: 1.0 - dropout_rate,
        }
    }

    pub(super) fn eval(running: &'a [RunningNorm]) -> Self {
        ForwardCtx {
            norm: NormMode::Eval { running, cursor: 0 },
            dropout_rng: None,
            keep_prob: 1.0,
        }
    }

    fn dropout(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        match &mut self.dropout_rng {
            Some(rng) if self.keep_prob < 1.0 => {
                let len = tape.value(x).len();
                let keep: Vec<bool> = (0..len).map(|_| rng.random_bool(self.keep_prob)).collect();
                tape.dropout(x, &keep, self.keep_prob)
            }
            _ => Ok(x),
        }
    }

    fn batch_norm(&mut self, tape: &mut Tape, x: Var, gain: Var, shift: Var) -> Result<Var> {
        match &mut self.norm {
            NormMode::Train { collected } => {
                let (out, stats) = tape.batch_norm_train(x, gain, shift, NORM_EPS)?;
                collected.push(stats);
                Ok(out)
            }
            NormMode::Eval { running, cursor } => {
                let site = running.get(*cursor).ok_or_else(|| {
                    Error::ModelSpec("more normalization sites than running buffers".into())
                })?;
                *cursor += 1;
                let gain_data = tape.value(gain).data().to_vec();
                let shift_data = tape.value(shift).data().to_vec();
                let scale: Vec<f64> = gain_data
                    .iter()
                    .zip(&site.variance)
                    .map(|(g, v)| g / (v + NORM_EPS).sqrt())
                    .collect();
                let offset: Vec<f64> = shift_data
                    .iter()
                    .zip(&site.mean)
                    .zip(&scale)
                    .map(|((s, m), sc)| s - sc * m)
                    .collect();
                tape.channel_affine(x, &scale, &offset)
            }
        }
    }
}

/// Hands out parameter vars in plan order and catches layout drift.
struct ParamCursor<'a> {
    vars: &'a [Var],
    pos: usize,
}

impl<'a> ParamCursor<'a> {
    fn new(vars: &'a [Var]) -> Self {
        ParamCursor { vars, pos: 0 }
    }

    fn next(&mut self) -> Var {
        let var = self.vars[self.pos];
        self.pos += 1;
        var
    }
}

/// Build the forward graph for `spec` on `tape`.
///
/// `input` is a `[batch, input_len]` leaf; the result has the same shape.
/// `params` must follow `init::plans(spec)` order.
pub(super) fn build_network(
    tape: &mut Tape,
    spec: &ModelSpec,
    params: &[Var],
    input: Var,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    let mut cursor = ParamCursor::new(params);
    let out = match spec.architecture {
        Architecture::Fcnn => fcnn(tape, &mut cursor, input, ctx),
        Architecture::SimpleCnn => simple_cnn(tape, spec, &mut cursor, input, ctx),
        Architecture::ComplexCnn => complex_cnn(tape, spec, &mut cursor, input, ctx),
        Architecture::Rnn => rnn(tape, spec, &mut cursor, input, ctx),
    }?;
    debug_assert_eq!(cursor.pos, params.len(), "forward/plan layout drift");
    Ok(out)
}

fn dense(tape: &mut Tape, cursor: &mut ParamCursor, x: Var) -> Result<Var> {
    let weight = cursor.next();
    let bias = cursor.next();
    let product = tape.matmul(x, weight)?;
    tape.add(product, bias)
}

fn fcnn(tape: &mut Tape, cursor: &mut ParamCursor, input: Var, ctx: &mut ForwardCtx) -> Result<Var> {
    let mut x = input;
    for _ in 0..4 {
        x = dense(tape, cursor, x)?;
        x = tape.relu(x)?;
        x = ctx.dropout(tape, x)?;
    }
    dense(tape, cursor, x)
}

fn simple_cnn(
    tape: &mut Tape,
    spec: &ModelSpec,
    cursor: &mut ParamCursor,
    input: Var,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    let batch = tape.value(input).shape()[0];
    let mut x = tape.reshape(input, vec![batch, 1, spec.input_len])?;
    for _ in 0..4 {
        let kernel = cursor.next();
        let gain = cursor.next();
        let shift = cursor.next();
        x = tape.conv1d(x, kernel, 1, 1)?;
        x = ctx.batch_norm(tape, x, gain, shift)?;
        x = tape.relu(x)?;
    }
    let flat = tape.flatten(x)?;
    dense(tape, cursor, flat)
}

/// conv-BN-ReLU-conv-BN with an identity skip, ReLU after the add.
fn residual_block(
    tape: &mut Tape,
    cursor: &mut ParamCursor,
    x: Var,
    pad: usize,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    let kernel0 = cursor.next();
    let gain0 = cursor.next();
    let shift0 = cursor.next();
    let mut h = tape.conv1d(x, kernel0, 1, pad)?;
    h = ctx.batch_norm(tape, h, gain0, shift0)?;
    h = tape.relu(h)?;
    let kernel1 = cursor.next();
    let gain1 = cursor.next();
    let shift1 = cursor.next();
    h = tape.conv1d(h, kernel1, 1, pad)?;
    h = ctx.batch_norm(tape, h, gain1, shift1)?;
    let sum = tape.add(x, h)?;
    tape.relu(sum)
}

fn complex_cnn(
    tape: &mut Tape,
    spec: &ModelSpec,
    cursor: &mut ParamCursor,
    input: Var,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    let batch = tape.value(input).shape()[0];
    let x = tape.reshape(input, vec![batch, 1, spec.input_len])?;
    let stem_kernel = cursor.next();
    let stem = tape.conv1d(x, stem_kernel, 1, 1)?;
    let mut branches = Vec::with_capacity(3);
    for kernel in [3usize, 5, 7] {
        let pad = (kernel - 1) / 2;
        let mut h = stem;
        for _ in 0..2 {
            h = residual_block(tape, cursor, h, pad, ctx)?;
        }
        branches.push(h);
    }
    let joined = tape.concat_channels(&branches)?;
    let merge_kernel = cursor.next();
    let merge_bias = cursor.next();
    let merged = tape.conv1d(joined, merge_kernel, 1, 0)?;
    let merged = tape.add(merged, merge_bias)?;
    let flat = tape.flatten(merged)?;
    dense(tape, cursor, flat)
}

fn rnn(
    tape: &mut Tape,
    spec: &ModelSpec,
    cursor: &mut ParamCursor,
    input: Var,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    use crate::autodiff::Tensor;

    let batch = tape.value(input).shape()[0];
    let hidden = spec.rnn_hidden;
    let input_weight = cursor.next();
    let hidden_weight = cursor.next();
    let bias = cursor.next();
    let mut h = tape.leaf(Tensor::zeros(vec![batch, hidden]), false);
    let mut c = tape.leaf(Tensor::zeros(vec![batch, hidden]), false);
    let mut states = Vec::with_capacity(spec.input_len);
    for t in 0..spec.input_len {
        let x_t = tape.slice_cols(input, t, 1)?;
        let from_input = tape.matmul(x_t, input_weight)?;
        let from_hidden = tape.matmul(h, hidden_weight)?;
        let summed = tape.add(from_input, from_hidden)?;
        let gates = tape.add(summed, bias)?;
        let input_raw = tape.slice_cols(gates, 0, hidden)?;
        let forget_raw = tape.slice_cols(gates, hidden, hidden)?;
        let cell_raw = tape.slice_cols(gates, 2 * hidden, hidden)?;
        let output_raw = tape.slice_cols(gates, 3 * hidden, hidden)?;
        let input_gate = tape.sigmoid(input_raw)?;
        let forget_gate = tape.sigmoid(forget_raw)?;
        let cell_candidate = tape.tanh(cell_raw)?;
        let output_gate = tape.sigmoid(output_raw)?;
        let retained = tape.mul(forget_gate, c)?;
        let written = tape.mul(input_gate, cell_candidate)?;
        c = tape.add(retained, written)?;
        let cell_act = tape.tanh(c)?;
        h = tape.mul(output_gate, cell_act)?;
        states.push(h);
    }
    let seq = tape.concat_cols(&states)?;
    let mut x = seq;
    for _ in 0..2 {
        x = dense(tape, cursor, x)?;
        x = tape.relu(x)?;
        x = ctx.dropout(tape, x)?;
    }
    dense(tape, cursor, x)
}
