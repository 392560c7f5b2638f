//! The recording tape and its differentiable primitives.

use crate::error::{Error, Result};
use crate::par;

use super::tensor::Tensor;

/// Handle to a node on a [`Tape`]. Only valid for the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// How the right operand of an addition is expanded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    /// Shapes match element for element.
    None,
    /// `[1, C]` bias added to every row of `[R, C]`.
    Row,
    /// `[1, C, 1]` bias added across batch and time of `[B, C, T]`.
    Channel,
}

/// Saved context for the batch-normalization backward pass.
#[derive(Debug, Clone)]
struct BatchNormCtx {
    normalized: Vec<f64>,
    inv_std: Vec<f64>,
}

/// Per-channel batch statistics, for the caller's running averages.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul {
        lhs: Var,
        rhs: Var,
    },
    Add {
        lhs: Var,
        rhs: Var,
        broadcast: Broadcast,
    },
    Mul {
        lhs: Var,
        rhs: Var,
    },
    Scale {
        input: Var,
        factor: f64,
    },
    Relu {
        input: Var,
    },
    Sigmoid {
        input: Var,
    },
    Tanh {
        input: Var,
    },
    Conv1d {
        input: Var,
        kernel: Var,
        stride: usize,
        pad: usize,
    },
    Dropout {
        input: Var,
        /// Mask already divided by the keep probability.
        scaled_mask: Vec<f64>,
    },
    BatchNorm {
        input: Var,
        gain: Var,
        shift: Var,
        ctx: BatchNormCtx,
    },
    ChannelAffine {
        input: Var,
        scale: Vec<f64>,
    },
    Reshape {
        input: Var,
    },
    SliceCols {
        input: Var,
        start: usize,
        len: usize,
    },
    ConcatCols {
        parts: Vec<Var>,
    },
    ConcatChannels {
        parts: Vec<Var>,
    },
    Mse {
        pred: Var,
        target: Var,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if any flowed there.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

/// Append-only record of a differentiable computation.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record an input tensor. Gradients accumulate into it only when
    /// `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// `[R, K] x [K, C] -> [R, C]`, rows computed independently.
    pub fn matmul(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let (a, b) = (self.value(lhs), self.value(rhs));
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", a.shape(), b.shape()),
            ));
        }
        let (rows, inner) = (a.shape()[0], a.shape()[1]);
        let cols = b.shape()[1];
        let out = matmul_raw(a.data(), b.data(), rows, inner, cols);
        let value = Tensor::new(vec![rows, cols], out)?;
        let rg = self.needs_grad(&[lhs, rhs]);
        Ok(self.push(value, Op::MatMul { lhs, rhs }, rg))
    }

    /// Elementwise addition; the right side may also be a `[1, C]` row bias
    /// or a `[1, C, 1]` channel bias.
    pub fn add(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let (a, b) = (self.value(lhs), self.value(rhs));
        let broadcast = if a.same_shape(b) {
            Broadcast::None
        } else if a.rank() == 2 && b.shape() == [1, a.shape()[1]] {
            Broadcast::Row
        } else if a.rank() == 3 && b.shape() == [1, a.shape()[1], 1] {
            Broadcast::Channel
        } else {
            return Err(Error::shape(
                "add",
                format!("{:?} + {:?}", a.shape(), b.shape()),
            ));
        };

        let data = match broadcast {
            Broadcast::None => a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect(),
            Broadcast::Row => {
                let cols = a.shape()[1];
                a.data()
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x + b.data()[i % cols])
                    .collect()
            }
            Broadcast::Channel => {
                let (channels, time) = (a.shape()[1], a.shape()[2]);
                a.data()
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x + b.data()[(i / time) % channels])
                    .collect()
            }
        };
        let value = Tensor::new(a.shape().to_vec(), data)?;
        let rg = self.needs_grad(&[lhs, rhs]);
        Ok(self.push(
            value,
            Op::Add {
                lhs,
                rhs,
                broadcast,
            },
            rg,
        ))
    }

    /// Elementwise product of same-shaped tensors.
    pub fn mul(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let (a, b) = (self.value(lhs), self.value(rhs));
        if !a.same_shape(b) {
            return Err(Error::shape(
                "mul",
                format!("{:?} * {:?}", a.shape(), b.shape()),
            ));
        }
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(a.shape().to_vec(), data)?;
        let rg = self.needs_grad(&[lhs, rhs]);
        Ok(self.push(value, Op::Mul { lhs, rhs }, rg))
    }

    /// Multiply every element by a constant.
    pub fn scale(&mut self, input: Var, factor: f64) -> Result<Var> {
        if !factor.is_finite() {
            return Err(Error::Numeric("scale factor must be finite".into()));
        }
        let x = self.value(input);
        let data = x.data().iter().map(|v| v * factor).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.needs_grad(&[input]);
        Ok(self.push(value, Op::Scale { input, factor }, rg))
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| v.max(0.0)).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.needs_grad(&[input]);
        Ok(self.push(value, Op::Relu { input }, rg))
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| sigmoid_scalar(v)).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.needs_grad(&[input]);
        Ok(self.push(value, Op::Sigmoid { input }, rg))
    }

    pub fn tanh(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| v.tanh()).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.needs_grad(&[input]);
        Ok(self.push(value, Op::Tanh { input }, rg))
    }

    /// Cross-correlation of `[B, Cin, T]` with kernels `[Cout, Cin, K]`,
    /// producing `[B, Cout, (T + 2*pad - K) / stride + 1]`.
    pub fn conv1d(&mut self, input: Var, kernel: Var, stride: usize, pad: usize) -> Result<Var> {
        let (x, w) = (self.value(input), self.value(kernel));
        if x.rank() != 3 || w.rank() != 3 || x.shape()[1] != w.shape()[1] {
            return Err(Error::shape(
                "conv1d",
                format!("input {:?}, kernel {:?}", x.shape(), w.shape()),
            ));
        }
        if stride == 0 {
            return Err(Error::shape("conv1d", "stride must be at least 1"));
        }
        let (batch, c_in, time) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (c_out, klen) = (w.shape()[0], w.shape()[2]);
        if time + 2 * pad < klen {
            return Err(Error::shape(
                "conv1d",
                format!("kernel {klen} exceeds padded length {}", time + 2 * pad),
            ));
        }
        let t_out = (time + 2 * pad - klen) / stride + 1;

        let mut out = vec![0.0; batch * c_out * t_out];
        let xd = x.data();
        let wd = w.data();
        // chunk (b, co) is an independent output row
        par::for_each_chunk_mut(&mut out, t_out, |chunk_idx, row| {
            let b = chunk_idx / c_out;
            let co = chunk_idx % c_out;
            for (ot, slot) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for ci in 0..c_in {
                    let x_base = (b * c_in + ci) * time;
                    let w_base = (co * c_in + ci) * klen;
                    for kk in 0..klen {
                        let it = (ot * stride + kk) as isize - pad as isize;
                        if it >= 0 && (it as usize) < time {
                            acc += xd[x_base + it as usize] * wd[w_base + kk];
                        }
                    }
                }
                *slot = acc;
            }
        });

        let value = Tensor::new(vec![batch, c_out, t_out], out)?;
        let rg = self.needs_grad(&[input, kernel]);
        Ok(self.push(
            value,
            Op::Conv1d {
                input,
                kernel,
                stride,
                pad,
            },
            rg,
        ))
    }

    /// Inverted dropout with a caller-supplied mask: kept elements are
    /// rescaled by 1/keep_prob so the expected value is unchanged.
    pub fn dropout(&mut self, input: Var, keep: &[bool], keep_prob: f64) -> Result<Var> {
        if !(keep_prob > 0.0 && keep_prob <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "keep probability must be in (0, 1], got {keep_prob}"
            )));
        }
        let x = self.value(input);
        if keep.len() != x.len() {
            return Err(Error::shape(
                "dropout",
                format!("mask of {} entries on {} elements", keep.len(), x.len()),
            ));
        }
        let scaled_mask: Vec<f64> = keep
            .iter()
            .map(|&k| if k { 1.0 / keep_prob } else { 0.0 })
            .collect();
        let data = x
            .data()
            .iter()
            .zip(&scaled_mask)
            .map(|(v, m)| v * m)
            .collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.needs_grad(&[input]);
        Ok(self.push(value, Op::Dropout { input, scaled_mask }, rg))
    }

    /// Training-mode batch normalization over `[B, C, T]`: per-channel
    /// statistics across batch and time, then a learned affine. Returns the
    /// batch statistics so the caller can update running averages.
    pub fn batch_norm_train(
        &mut self,
        input: Var,
        gain: Var,
        shift: Var,
        eps: f64,
    ) -> Result<(Var, BatchStats)> {
        let x = self.value(input);
        if x.rank() != 3 {
            return Err(Error::shape(
                "batch_norm",
                format!("expected [B, C, T], got {:?}", x.shape()),
            ));
        }
        let (batch, channels, time) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let g = self.value(gain);
        let s = self.value(shift);
        if g.shape() != [1, channels, 1] || s.shape() != [1, channels, 1] {
            return Err(Error::shape(
                "batch_norm",
                format!(
                    "gain {:?} and shift {:?} must be [1, {channels}, 1]",
                    g.shape(),
                    s.shape()
                ),
            ));
        }

        let xd = x.data();
        let count = (batch * time) as f64;
        // each channel reduces its own strided slice in fixed order
        let stats: Vec<(f64, f64)> = par::map_range(channels, |c| {
            let mut sum = 0.0;
            for b in 0..batch {
                let base = (b * channels + c) * time;
                for t in 0..time {
                    sum += xd[base + t];
                }
            }
            let mean = sum / count;
            let mut var_sum = 0.0;
            for b in 0..batch {
                let base = (b * channels + c) * time;
                for t in 0..time {
                    let d = xd[base + t] - mean;
                    var_sum += d * d;
                }
            }
            (mean, var_sum / count)
        });

        let inv_std: Vec<f64> = stats.iter().map(|&(_, v)| 1.0 / (v + eps).sqrt()).collect();
        let gd = g.data();
        let sd = s.data();
        let mut normalized = vec![0.0; xd.len()];
        let mut out = vec![0.0; xd.len()];
        for (i, &v) in xd.iter().enumerate() {
            let c = (i / time) % channels;
            let n = (v - stats[c].0) * inv_std[c];
            normalized[i] = n;
            out[i] = gd[c] * n + sd[c];
        }

        let value = Tensor::new(x.shape().to_vec(), out)?;
        let ctx = BatchNormCtx {
            normalized,
            inv_std: inv_std.clone(),
        };
        let rg = self.needs_grad(&[input, gain, shift]);
        let var = self.push(
            value,
            Op::BatchNorm {
                input,
                gain,
                shift,
                ctx,
            },
            rg,
        );
        Ok((
            var,
            BatchStats {
                mean: stats.iter().map(|&(m, _)| m).collect(),
                variance: stats.iter().map(|&(_, v)| v).collect(),
            },
        ))
    }

    /// Per-channel affine with constant coefficients: evaluation-mode batch
    /// normalization folded to `scale * x + shift`.
    pub fn channel_affine(&mut self, input: Var, scale: &[f64], shift: &[f64]) -> Result<Var> {
        let x = self.value(input);
        if x.rank() != 3 || scale.len() != x.shape()[1] || shift.len() != x.shape()[1] {
            return Err(Error::shape(
                "channel_affine",
                format!(
                    "input {:?} with {} scales and {} shifts",
                    x.shape(),
                    scale.len(),
                    shift.len()
                ),
            ));
        }
        let (channels, time) = (x.shape()[1], x.shape()[2]);
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let c = (i / time) % channels;
                scale[c] * v + shift[c]
            })
            .collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.needs_grad(&[input]);
        Ok(self.push(
            value,
            Op::ChannelAffine {
                input,
                scale: scale.to_vec(),
            },
            rg,
        ))
    }

    /// Reinterpret the elements under a new shape of equal size.
    pub fn reshape(&mut self, input: Var, shape: Vec<usize>) -> Result<Var> {
        let x = self.value(input);
        let value = Tensor::new(shape, x.data().to_vec())?;
        let rg = self.needs_grad(&[input]);
        Ok(self.push(value, Op::Reshape { input }, rg))
    }

    /// `[B, C, T]` to `[B, C*T]`, batch rows preserved.
    pub fn flatten(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        if x.rank() != 3 {
            return Err(Error::shape(
                "flatten",
                format!("expected [B, C, T], got {:?}", x.shape()),
            ));
        }
        let shape = vec![x.shape()[0], x.shape()[1] * x.shape()[2]];
        self.reshape(input, shape)
    }

    /// Columns `[start, start+len)` of a matrix.
    pub fn slice_cols(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(input);
        if x.rank() != 2 || len == 0 || start + len > x.shape()[1] {
            return Err(Error::shape(
                "slice_cols",
                format!("[{start}, {}) of {:?}", start + len, x.shape()),
            ));
        }
        let (rows, cols) = (x.shape()[0], x.shape()[1]);
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&x.data()[r * cols + start..r * cols + start + len]);
        }
        let value = Tensor::new(vec![rows, len], data)?;
        let rg = self.needs_grad(&[input]);
        Ok(self.push(value, Op::SliceCols { input, start, len }, rg))
    }

    /// Join matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_cols", "no inputs"));
        }
        let rows = self.value(parts[0]).shape()[0];
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 2 || t.shape()[0] != rows {
                return Err(Error::shape(
                    "concat_cols",
                    format!("part {:?} does not have {rows} rows", t.shape()),
                ));
            }
        }
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).shape()[1]).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                let src = self.value(p).data();
                data.extend_from_slice(&src[r * w..(r + 1) * w]);
            }
        }
        let value = Tensor::new(vec![rows, total], data)?;
        let rg = self.needs_grad(parts);
        Ok(self.push(
            value,
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
            rg,
        ))
    }

    /// Stack `[B, C_i, T]` tensors along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_channels", "no inputs"));
        }
        let first = self.value(parts[0]).shape().to_vec();
        if first.len() != 3 {
            return Err(Error::shape(
                "concat_channels",
                format!("expected [B, C, T], got {first:?}"),
            ));
        }
        let (batch, time) = (first[0], first[2]);
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 3 || t.shape()[0] != batch || t.shape()[2] != time {
                return Err(Error::shape(
                    "concat_channels",
                    format!("part {:?} incompatible with [B={batch}, _, T={time}]", t.shape()),
                ));
            }
        }
        let channels: Vec<usize> = parts.iter().map(|&p| self.value(p).shape()[1]).collect();
        let total: usize = channels.iter().sum();
        let mut data = Vec::with_capacity(batch * total * time);
        for b in 0..batch {
            for (&p, &c) in parts.iter().zip(&channels) {
                let src = self.value(p).data();
                data.extend_from_slice(&src[b * c * time..(b + 1) * c * time]);
            }
        }
        let value = Tensor::new(vec![batch, total, time], data)?;
        let rg = self.needs_grad(parts);
        Ok(self.push(
            value,
            Op::ConcatChannels {
                parts: parts.to_vec(),
            },
            rg,
        ))
    }

    /// Mean squared error over all elements; the output is a scalar.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if !p.same_shape(t) {
            return Err(Error::shape(
                "mse",
                format!("{:?} vs {:?}", p.shape(), t.shape()),
            ));
        }
        let mut acc = 0.0;
        for (a, b) in p.data().iter().zip(t.data()) {
            let d = a - b;
            acc += d * d;
        }
        let value = Tensor::scalar(acc / p.len() as f64);
        let rg = self.needs_grad(&[pred, target]);
        Ok(self.push(value, Op::Mse { pred, target }, rg))
    }

    /// Reverse pass from a scalar root. Returns gradients for every node
    /// that required them; other nodes have no entry.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_node = &self.nodes[root.0];
        if root_node.value.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("root must be scalar, shape is {:?}", root_node.value.shape()),
            ));
        }
        if !root_node.requires_grad {
            return Err(Error::InvalidInput(
                "backward from a node with no differentiable inputs".into(),
            ));
        }

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(dy) = grads[idx].clone() else {
                continue;
            };
            self.propagate(idx, &dy, &mut grads);
        }

        // keep only gradients that belong to differentiable nodes
        for (i, g) in grads.iter_mut().enumerate() {
            if !self.nodes[i].requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], target: Var, contribution: Vec<f64>) {
        if !self.nodes[target.0].requires_grad {
            return;
        }
        match &mut grads[target.0] {
            Some(existing) => {
                for (e, c) in existing.data_mut().iter_mut().zip(&contribution) {
                    *e += c;
                }
            }
            slot => {
                let shape = self.nodes[target.0].value.shape().to_vec();
                *slot = Some(Tensor::new(shape, contribution).expect("gradient shape"));
            }
        }
    }

    fn propagate(&self, idx: usize, dy: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { lhs, rhs } => {
                let a = self.value(*lhs);
                let b = self.value(*rhs);
                let (rows, inner) = (a.shape()[0], a.shape()[1]);
                let cols = b.shape()[1];
                if self.nodes[lhs.0].requires_grad {
                    // dA[r,k] = sum_c dY[r,c] * B[k,c]
                    let da = par::map_range(rows * inner, |ri| {
                        let (r, k) = (ri / inner, ri % inner);
                        let mut acc = 0.0;
                        for c in 0..cols {
                            acc += dy.data()[r * cols + c] * b.data()[k * cols + c];
                        }
                        acc
                    });
                    self.accumulate(grads, *lhs, da);
                }
                if self.nodes[rhs.0].requires_grad {
                    // dB[k,c] = sum_r A[r,k] * dY[r,c]
                    let db = par::map_range(inner * cols, |ki| {
                        let (k, c) = (ki / cols, ki % cols);
                        let mut acc = 0.0;
                        for r in 0..rows {
                            acc += a.data()[r * inner + k] * dy.data()[r * cols + c];
                        }
                        acc
                    });
                    self.accumulate(grads, *rhs, db);
                }
            }
            Op::Add {
                lhs,
                rhs,
                broadcast,
            } => {
                self.accumulate(grads, *lhs, dy.data().to_vec());
                if self.nodes[rhs.0].requires_grad {
                    let contribution = match broadcast {
                        Broadcast::None => dy.data().to_vec(),
                        Broadcast::Row => {
                            let cols = node.value.shape()[1];
                            let mut acc = vec![0.0; cols];
                            for (i, &g) in dy.data().iter().enumerate() {
                                acc[i % cols] += g;
                            }
                            acc
                        }
                        Broadcast::Channel => {
                            let (channels, time) =
                                (node.value.shape()[1], node.value.shape()[2]);
                            let mut acc = vec![0.0; channels];
                            for (i, &g) in dy.data().iter().enumerate() {
                                acc[(i / time) % channels] += g;
                            }
                            acc
                        }
                    };
                    self.accumulate(grads, *rhs, contribution);
                }
            }
            Op::Mul { lhs, rhs } => {
                let a = self.value(*lhs);
                let b = self.value(*rhs);
                if self.nodes[lhs.0].requires_grad {
                    let da = dy.data().iter().zip(b.data()).map(|(g, y)| g * y).collect();
                    self.accumulate(grads, *lhs, da);
                }
                if self.nodes[rhs.0].requires_grad {
                    let db = dy.data().iter().zip(a.data()).map(|(g, x)| g * x).collect();
                    self.accumulate(grads, *rhs, db);
                }
            }
            Op::Scale { input, factor } => {
                let dx = dy.data().iter().map(|g| g * factor).collect();
                self.accumulate(grads, *input, dx);
            }
            Op::Relu { input } => {
                let out = &node.value;
                let dx = dy
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(g, &y)| if y > 0.0 { *g } else { 0.0 })
                    .collect();
                self.accumulate(grads, *input, dx);
            }
            Op::Sigmoid { input } => {
                let out = &node.value;
                let dx = dy
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(g, &s)| g * s * (1.0 - s))
                    .collect();
                self.accumulate(grads, *input, dx);
            }
            Op::Tanh { input } => {
                let out = &node.value;
                let dx = dy
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(g, &y)| g * (1.0 - y * y))
                    .collect();
                self.accumulate(grads, *input, dx);
            }
            Op::Conv1d {
                input,
                kernel,
                stride,
                pad,
            } => {
                self.conv1d_backward(*input, *kernel, *stride, *pad, dy, grads);
            }
            Op::Dropout { input, scaled_mask } => {
                let dx = dy
                    .data()
                    .iter()
                    .zip(scaled_mask)
                    .map(|(g, m)| g * m)
                    .collect();
                self.accumulate(grads, *input, dx);
            }
            Op::BatchNorm {
                input,
                gain,
                shift,
                ctx,
            } => {
                let x = self.value(*input);
                let (batch, channels, time) =
                    (x.shape()[0], x.shape()[1], x.shape()[2]);
                let count = (batch * time) as f64;
                let g = self.value(*gain);

                // per-channel sums of dy and dy * normalized, fixed order
                let mut sum_dy = vec![0.0; channels];
                let mut sum_dyn = vec![0.0; channels];
                for (i, &gv) in dy.data().iter().enumerate() {
                    let c = (i / time) % channels;
                    sum_dy[c] += gv;
                    sum_dyn[c] += gv * ctx.normalized[i];
                }

                if self.nodes[gain.0].requires_grad {
                    self.accumulate(grads, *gain, sum_dyn.clone());
                }
                if self.nodes[shift.0].requires_grad {
                    self.accumulate(grads, *shift, sum_dy.clone());
                }
                if self.nodes[input.0].requires_grad {
                    let dx: Vec<f64> = dy
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(i, &gv)| {
                            let c = (i / time) % channels;
                            g.data()[c]
                                * ctx.inv_std[c]
                                * (gv
                                    - sum_dy[c] / count
                                    - ctx.normalized[i] * sum_dyn[c] / count)
                        })
                        .collect();
                    self.accumulate(grads, *input, dx);
                }
            }
            Op::ChannelAffine { input, scale } => {
                let (channels, time) = (node.value.shape()[1], node.value.shape()[2]);
                let dx = dy
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, g)| g * scale[(i / time) % channels])
                    .collect();
                self.accumulate(grads, *input, dx);
            }
            Op::Reshape { input } => {
                self.accumulate(grads, *input, dy.data().to_vec());
            }
            Op::SliceCols { input, start, len } => {
                let src = self.value(*input);
                let (rows, cols) = (src.shape()[0], src.shape()[1]);
                let mut dx = vec![0.0; rows * cols];
                for r in 0..rows {
                    for j in 0..*len {
                        dx[r * cols + start + j] = dy.data()[r * len + j];
                    }
                }
                self.accumulate(grads, *input, dx);
            }
            Op::ConcatCols { parts } => {
                let rows = node.value.shape()[0];
                let total = node.value.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).shape()[1];
                    if self.nodes[p.0].requires_grad {
                        let mut dx = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            dx.extend_from_slice(
                                &dy.data()[r * total + offset..r * total + offset + w],
                            );
                        }
                        self.accumulate(grads, p, dx);
                    }
                    offset += w;
                }
            }
            Op::ConcatChannels { parts } => {
                let (batch, total, time) = (
                    node.value.shape()[0],
                    node.value.shape()[1],
                    node.value.shape()[2],
                );
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).shape()[1];
                    if self.nodes[p.0].requires_grad {
                        let mut dx = Vec::with_capacity(batch * c * time);
                        for b in 0..batch {
                            let base = (b * total + offset) * time;
                            dx.extend_from_slice(&dy.data()[base..base + c * time]);
                        }
                        self.accumulate(grads, p, dx);
                    }
                    offset += c;
                }
            }
            Op::Mse { pred, target } => {
                let p = self.value(*pred);
                let t = self.value(*target);
                let n = p.len() as f64;
                let g = dy.data()[0];
                if self.nodes[pred.0].requires_grad {
                    let dp = p
                        .data()
                        .iter()
                        .zip(t.data())
                        .map(|(a, b)| g * 2.0 * (a - b) / n)
                        .collect();
                    self.accumulate(grads, *pred, dp);
                }
                if self.nodes[target.0].requires_grad {
                    let dt = p
                        .data()
                        .iter()
                        .zip(t.data())
                        .map(|(a, b)| g * -2.0 * (a - b) / n)
                        .collect();
                    self.accumulate(grads, *target, dt);
                }
            }
        }
    }

    fn conv1d_backward(
        &self,
        input: Var,
        kernel: Var,
        stride: usize,
        pad: usize,
        dy: &Tensor,
        grads: &mut [Option<Tensor>],
    ) {
        let x = self.value(input);
        let w = self.value(kernel);
        let (batch, c_in, time) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (c_out, klen) = (w.shape()[0], w.shape()[2]);
        let t_out = dy.shape()[2];
        let xd = x.data();
        let wd = w.data();
        let dyd = dy.data();

        if self.nodes[input.0].requires_grad {
            // each batch element owns a disjoint slice of dx
            let mut dx = vec![0.0; xd.len()];
            par::for_each_chunk_mut(&mut dx, c_in * time, |b, dxb| {
                for co in 0..c_out {
                    let dy_base = (b * c_out + co) * t_out;
                    for ci in 0..c_in {
                        let w_base = (co * c_in + ci) * klen;
                        for ot in 0..t_out {
                            let g = dyd[dy_base + ot];
                            for kk in 0..klen {
                                let it = (ot * stride + kk) as isize - pad as isize;
                                if it >= 0 && (it as usize) < time {
                                    dxb[ci * time + it as usize] += g * wd[w_base + kk];
                                }
                            }
                        }
                    }
                }
            });
            self.accumulate(grads, input, dx);
        }

        if self.nodes[kernel.0].requires_grad {
            // each output channel owns a disjoint slice of dw
            let mut dw = vec![0.0; wd.len()];
            par::for_each_chunk_mut(&mut dw, c_in * klen, |co, dwc| {
                for ci in 0..c_in {
                    for kk in 0..klen {
                        let mut acc = 0.0;
                        for b in 0..batch {
                            let x_base = (b * c_in + ci) * time;
                            let dy_base = (b * c_out + co) * t_out;
                            for ot in 0..t_out {
                                let it = (ot * stride + kk) as isize - pad as isize;
                                if it >= 0 && (it as usize) < time {
                                    acc += xd[x_base + it as usize] * dyd[dy_base + ot];
                                }
                            }
                        }
                        dwc[ci * klen + kk] = acc;
                    }
                }
            });
            self.accumulate(grads, kernel, dw);
        }
    }
}

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-parallel dense product; inner sums run in fixed index order.
fn matmul_raw(a: &[f64], b: &[f64], rows: usize, inner: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    par::for_each_chunk_mut(&mut out, cols, |r, row| {
        let a_row = &a[r * inner..(r + 1) * inner];
        for (j, slot) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &av) in a_row.iter().enumerate() {
                acc += av * b[k * cols + j];
            }
            *slot = acc;
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(tape: &mut Tape, shape: Vec<usize>, data: Vec<f64>) -> Var {
        tape.leaf(Tensor::new(shape, data).unwrap(), true)
    }

    #[test]
    fn matmul_known_product() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = leaf(&mut tape, vec![3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).shape(), &[2, 2]);
        assert_eq!(tape.value(c).data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, vec![2, 3], vec![0.0; 6]);
        let b = leaf(&mut tape, vec![2, 2], vec![0.0; 4]);
        assert!(tape.matmul(a, b).is_err());
    }

    #[test]
    fn add_broadcast_forms() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let row = leaf(&mut tape, vec![1, 2], vec![10.0, 20.0]);
        let y = tape.add(x, row).unwrap();
        assert_eq!(tape.value(y).data(), &[11.0, 22.0, 13.0, 24.0]);

        let x3 = leaf(&mut tape, vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let ch = leaf(&mut tape, vec![1, 2, 1], vec![100.0, 200.0]);
        let y3 = tape.add(x3, ch).unwrap();
        assert_eq!(tape.value(y3).data(), &[101.0, 102.0, 203.0, 204.0]);

        let bad = leaf(&mut tape, vec![1, 3], vec![0.0; 3]);
        assert!(tape.add(x, bad).is_err());
    }

    #[test]
    fn conv1d_hand_example() {
        // single batch, single channel: x = [1,2,3,4], k = [1,0,-1], pad 1
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]);
        let k = leaf(&mut tape, vec![1, 1, 3], vec![1.0, 0.0, -1.0]);
        let y = tape.conv1d(x, k, 1, 1).unwrap();
        // same padding keeps length 4: [0*1+1*0+2*(-1), 1-3, 2-4, 3-0]
        assert_eq!(tape.value(y).shape(), &[1, 1, 4]);
        assert_eq!(tape.value(y).data(), &[-2.0, -2.0, -2.0, 3.0]);
    }

    #[test]
    fn conv1d_stride_and_shapes() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![2, 3, 8], vec![0.25; 48]);
        let k = leaf(&mut tape, vec![4, 3, 3], vec![0.5; 36]);
        let y = tape.conv1d(x, k, 2, 1).unwrap();
        // (8 + 2 - 3) / 2 + 1 = 4
        assert_eq!(tape.value(y).shape(), &[2, 4, 4]);

        let k_bad = leaf(&mut tape, vec![4, 2, 3], vec![0.0; 24]);
        assert!(tape.conv1d(x, k_bad, 1, 1).is_err());
    }

    #[test]
    fn mse_value_and_gradient() {
        let mut tape = Tape::new();
        let p = leaf(&mut tape, vec![1, 3], vec![1.0, 2.0, 3.0]);
        let t = tape.leaf(
            Tensor::new(vec![1, 3], vec![0.0, 0.0, 0.0]).unwrap(),
            false,
        );
        let loss = tape.mse(p, t).unwrap();
        let expected = (1.0 + 4.0 + 9.0) / 3.0;
        assert!((tape.value(loss).item().unwrap() - expected).abs() < 1e-12);

        let grads = tape.backward(loss).unwrap();
        let dp = grads.wrt(p).unwrap();
        for (g, want) in dp.data().iter().zip([2.0 / 3.0, 4.0 / 3.0, 2.0]) {
            assert!((g - want).abs() < 1e-12);
        }
        assert!(grads.wrt(t).is_none());
    }

    #[test]
    fn chain_rule_through_scale_and_relu() {
        // loss = mean(relu(2x)^2) elementwise with x = [-1, 3]
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![1, 2], vec![-1.0, 3.0]);
        let scaled = tape.scale(x, 2.0).unwrap();
        let activated = tape.relu(scaled).unwrap();
        let zero = tape.leaf(Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap(), false);
        let loss = tape.mse(activated, zero).unwrap();
        // loss = (0 + 36) / 2 = 18
        assert!((tape.value(loss).item().unwrap() - 18.0).abs() < 1e-12);
        let grads = tape.backward(loss).unwrap();
        // d/dx = (2 * relu(2x) / 2) * relu'(2x) * 2, so at x = 3: 6 * 1 * 2 = 12
        assert_eq!(grads.wrt(x).unwrap().data(), &[0.0, 12.0]);
    }

    #[test]
    fn dropout_scales_kept_values() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]);
        let y = tape
            .dropout(x, &[true, false, true, false], 0.5)
            .unwrap();
        assert_eq!(tape.value(y).data(), &[2.0, 0.0, 6.0, 0.0]);

        let zero = tape.leaf(Tensor::new(vec![1, 4], vec![0.0; 4]).unwrap(), false);
        let loss = tape.mse(y, zero).unwrap();
        let grads = tape.backward(loss).unwrap();
        let dx = grads.wrt(x).unwrap().data();
        assert_eq!(dx[1], 0.0);
        assert_eq!(dx[3], 0.0);
        assert!(dx[0] != 0.0 && dx[2] != 0.0);
    }

    #[test]
    fn batch_norm_normalizes_per_channel() {
        let mut tape = Tape::new();
        // one channel: values 1..4 over batch*time
        let x = leaf(&mut tape, vec![2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let gain = leaf(&mut tape, vec![1, 1, 1], vec![1.0]);
        let shift = leaf(&mut tape, vec![1, 1, 1], vec![0.0]);
        let (y, stats) = tape.batch_norm_train(x, gain, shift, 1e-5).unwrap();
        assert!((stats.mean[0] - 2.5).abs() < 1e-12);
        assert!((stats.variance[0] - 1.25).abs() < 1e-12);
        let out = tape.value(y).data();
        let mean: f64 = out.iter().sum::<f64>() / 4.0;
        let var: f64 = out.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn slice_and_concat_round_trip() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let left = tape.slice_cols(x, 0, 1).unwrap();
        let rest = tape.slice_cols(x, 1, 2).unwrap();
        let joined = tape.concat_cols(&[left, rest]).unwrap();
        assert_eq!(tape.value(joined).data(), tape.value(x).data());

        // gradient flows back through both pieces
        let zero = tape.leaf(Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap(), false);
        let loss = tape.mse(joined, zero).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).unwrap().len(), 6);
    }

    #[test]
    fn concat_channels_stacks() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, vec![1, 1, 2], vec![1.0, 2.0]);
        let b = leaf(&mut tape, vec![1, 2, 2], vec![3.0, 4.0, 5.0, 6.0]);
        let y = tape.concat_channels(&[a, b]).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 3, 2]);
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![1, 2], vec![1.0, 2.0]);
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn gradient_reaches_shared_input_twice() {
        // y = x * x as mul(x, x): dy/dx = 2x via two accumulation paths
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![1, 1], vec![3.0]);
        let y = tape.mul(x, x).unwrap();
        let zero = tape.leaf(Tensor::new(vec![1, 1], vec![0.0]).unwrap(), false);
        let loss = tape.mse(y, zero).unwrap();
        // loss = x^4, dloss/dx = 4 x^3 = 108
        let grads = tape.backward(loss).unwrap();
        assert!((grads.wrt(x).unwrap().data()[0] - 108.0).abs() < 1e-9);
    }
}
