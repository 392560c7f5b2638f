//! Benchmark toolkit for single-channel EEG artifact removal.
//!
//! The crate generates semi-synthetic contaminated EEG segments with ground
//! truth by linearly mixing clean EEG with ocular or myogenic artifact
//! segments at controlled SNR levels, trains small neural denoisers on the
//! pairs, runs traditional baselines (empirical mode decomposition and fixed
//! band filtering), and scores everything with temporal/spectral relative
//! RMSE, correlation, and band-power ratios.
//!
//! Module map:
//!
//! - [`signal`]: segment type, RMS/SNR mixing math, standardization.
//! - [`dsp`]: Butterworth filters, polyphase resampling, periodogram PSD,
//!   band-power ratios.
//! - [`dataset`]: `.npy` bank I/O, surrogate segment synthesis, splits, and
//!   semi-synthetic pair generation.
//! - [`autodiff`]: reverse-mode tape, tensor primitives, Adam, and gradient
//!   checking.
//! - [`models`]: the four benchmark architectures, training loop, inference.
//! - [`baselines`]: EMD-based and filter-based traditional denoisers.
//! - [`metrics`]: evaluation metrics, report aggregation, one-way ANOVA.
//!
//! Data-parallel inner loops (batch evaluation, pair generation, convolution)
//! run on rayon when the `parallel` feature is enabled (the default) and fall
//! back to equivalent sequential loops without it. Both paths produce
//! bit-identical results: parallelism is only applied across disjoint output
//! slices, never across floating-point reductions.

pub mod autodiff;
pub mod baselines;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod metrics;
pub mod models;
pub mod par;
pub mod signal;

pub use error::{Error, Result};
