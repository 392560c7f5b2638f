//! Reverse-mode automatic differentiation on a linear tape.
//!
//! A [`Tape`] records every primitive as it executes; [`Tape::backward`]
//! walks the record once in reverse and accumulates gradients for every
//! node that needs them. Recording order is construction order, which is
//! already topological, so no explicit sort is needed.
//!
//! Gradients are bit-reproducible: every reduction (matmul inner products,
//! convolution accumulations, batch statistics, the mean-squared-error sum)
//! runs in a fixed index order on one thread. Data parallelism is applied
//! only across disjoint output regions, so results are identical with the
//! `parallel` feature on or off and for any thread count.

mod adam;
mod check;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use check::{grad_check, GradCheckReport};
pub use tape::{BatchStats, Gradients, Tape, Var};
pub use tensor::Tensor;
