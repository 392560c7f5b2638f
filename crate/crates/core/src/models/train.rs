//! Minibatch Adam training on normalized segment pairs.
//!
//! Every pair is scaled by its stored contaminated standard deviation before
//! batching, so the loss is measured in the same normalized domain the
//! network sees at inference time. One training run is single-threaded and,
//! for a fixed seed, bit-reproducible: shuffling and dropout masks come from
//! one seeded generator, and all loss reductions are sequential.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Adam, AdamConfig, Tape, Tensor, Var};
use crate::dataset::SemiSyntheticPair;
use crate::error::{Error, Result};

use super::forward::{build_network, ForwardCtx};
use super::Model;

/// Running-statistics decay: new = momentum·old + (1 − momentum)·batch.
const RUNNING_MOMENTUM: f64 = 0.9;

/// Hyperparameters for one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Seed for epoch shuffling and dropout masks.
    pub seed: u64,
    /// Reshuffle the pair order every epoch; `false` keeps dataset order.
    pub shuffle: bool,
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size: 64,
            adam: AdamConfig::default(),
            seed,
            shuffle: true,
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn with_learning_rate(mut self, learning_rate: f64) -> Self {
        self.adam = self.adam.with_learning_rate(learning_rate);
        self
    }

    pub fn with_shuffle(mut self, shuffle: bool) -> Self {
        self.shuffle = shuffle;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Loss curves and timing from one training run.
#[derive(Debug, Clone)]
pub struct TrainRecord {
    /// Mean training loss per epoch, in pass order.
    pub train_loss: Vec<f64>,
    /// Full validation loss per epoch, evaluated in inference mode. NaN when
    /// no validation pairs were given.
    pub val_loss: Vec<f64>,
    /// Wall-clock seconds per epoch. A measurement, not a computation:
    /// excluded from the determinism guarantee.
    pub epoch_seconds: Vec<f64>,
    /// Where the trained parameters were checkpointed, for callers that save
    /// them.
    pub checkpoint: Option<PathBuf>,
}

impl TrainRecord {
    /// Trailing moving average of the training loss: element `i` averages
    /// the last `window` epochs ending at `i` (fewer at the start).
    pub fn smoothed_train_loss(&self, window: usize) -> Vec<f64> {
        assert!(window > 0, "window must be positive");
        self.train_loss
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let start = (i + 1).saturating_sub(window);
                let span = &self.train_loss[start..=i];
                span.iter().sum::<f64>() / span.len() as f64
            })
            .collect()
    }

    /// Write `epoch,train_loss,val_loss` rows (1-based epochs).
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (i, (train, val)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            out.push_str(&format!("{},{},{}\n", i + 1, train, val));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// One pair, pre-scaled to the normalized domain.
type NormalizedPair = (Vec<f64>, Vec<f64>);

fn normalize_pairs(
    pairs: &[SemiSyntheticPair],
    input_len: usize,
) -> Result<Vec<NormalizedPair>> {
    pairs
        .iter()
        .map(|pair| {
            if pair.ground_truth.len() != input_len || pair.contaminated.len() != input_len {
                return Err(Error::shape(
                    "train",
                    format!(
                        "pair segment lengths {}/{} do not match input_len {}",
                        pair.ground_truth.len(),
                        pair.contaminated.len(),
                        input_len
                    ),
                ));
            }
            let std = pair.contaminated_std;
            if !(std.is_finite() && std > 0.0) {
                return Err(Error::DegenerateSignal(format!(
                    "contaminated_std {std} is not a positive scale"
                )));
            }
            let input: Vec<f64> = pair.contaminated.samples().iter().map(|v| v / std).collect();
            let target: Vec<f64> = pair.ground_truth.samples().iter().map(|v| v / std).collect();
            Ok((input, target))
        })
        .collect()
}

impl Model {
    /// Train in place with minibatch Adam on mean squared error.
    ///
    /// Records the mean training loss of each epoch and the loss over all of
    /// `val_pairs` after each epoch (inference mode: dropout off, running
    /// normalization statistics). Identical inputs, config, and seed yield a
    /// bit-identical loss history.
    pub fn train(
        &mut self,
        train_pairs: &[SemiSyntheticPair],
        val_pairs: &[SemiSyntheticPair],
        config: &TrainConfig,
    ) -> Result<TrainRecord> {
        config.validate()?;
        if train_pairs.is_empty() {
            return Err(Error::InvalidInput("no training pairs".into()));
        }
        let input_len = self.spec.input_len;
        let train_set = normalize_pairs(train_pairs, input_len)?;
        let val_set = normalize_pairs(val_pairs, input_len)?;

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let sizes: Vec<usize> = self.params.iter().map(Tensor::len).collect();
        let mut adam = Adam::new(config.adam, &sizes)?;

        let mut record = TrainRecord {
            train_loss: Vec::with_capacity(config.epochs),
            val_loss: Vec::with_capacity(config.epochs),
            epoch_seconds: Vec::with_capacity(config.epochs),
            checkpoint: None,
        };
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        for _ in 0..config.epochs {
            let started = Instant::now();
            if config.shuffle {
                order.shuffle(&mut rng);
            }
            let mut weighted_loss = 0.0;
            let mut rows_seen = 0usize;
            for chunk in order.chunks(config.batch_size) {
                let loss = self.train_step(&train_set, chunk, &mut rng, &mut adam)?;
                weighted_loss += loss * chunk.len() as f64;
                rows_seen += chunk.len();
            }
            record.train_loss.push(weighted_loss / rows_seen as f64);
            record.val_loss.push(self.dataset_loss(&val_set)?);
            record.epoch_seconds.push(started.elapsed().as_secs_f64());
        }
        Ok(record)
    }

    fn train_step(
        &mut self,
        train_set: &[NormalizedPair],
        chunk: &[usize],
        rng: &mut ChaCha8Rng,
        adam: &mut Adam,
    ) -> Result<f64> {
        let input_len = self.spec.input_len;
        let rows = chunk.len();
        let mut input_data = Vec::with_capacity(rows * input_len);
        let mut target_data = Vec::with_capacity(rows * input_len);
        for &idx in chunk {
            input_data.extend_from_slice(&train_set[idx].0);
            target_data.extend_from_slice(&train_set[idx].1);
        }

        let mut tape = Tape::new();
        let vars: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.leaf(p.clone(), true))
            .collect();
        let input = tape.leaf(Tensor::new(vec![rows, input_len], input_data)?, false);
        let target = tape.leaf(Tensor::new(vec![rows, input_len], target_data)?, false);
        let mut collected = Vec::new();
        let dropout_rng = (self.spec.dropout > 0.0).then_some(&mut *rng);
        let mut ctx = ForwardCtx::train(&mut collected, dropout_rng, self.spec.dropout);
        let pred = build_network(&mut tape, &self.spec, &vars, input, &mut ctx)?;
        let loss = tape.mse(pred, target)?;
        let loss_value = tape.value(loss).item()?;
        if !loss_value.is_finite() {
            return Err(Error::Numeric("training loss is not finite".into()));
        }
        let grads = tape.backward(loss)?;
        let grad_refs: Vec<Option<&Tensor>> = vars.iter().map(|&v| grads.wrt(v)).collect();
        adam.step(&mut self.params, &grad_refs)?;

        debug_assert_eq!(collected.len(), self.norms.len());
        for (running, stats) in self.norms.iter_mut().zip(&collected) {
            for (r, b) in running.mean.iter_mut().zip(&stats.mean) {
                *r = RUNNING_MOMENTUM * *r + (1.0 - RUNNING_MOMENTUM) * b;
            }
            for (r, b) in running.variance.iter_mut().zip(&stats.variance) {
                *r = RUNNING_MOMENTUM * *r + (1.0 - RUNNING_MOMENTUM) * b;
            }
        }
        Ok(loss_value)
    }

    /// Inference-mode MSE over a normalized set; NaN for an empty set.
    fn dataset_loss(&self, set: &[NormalizedPair]) -> Result<f64> {
        if set.is_empty() {
            return Ok(f64::NAN);
        }
        let input_len = self.spec.input_len;
        let mut total_sq = 0.0;
        for chunk in set.chunks(64) {
            let rows = chunk.len();
            let mut data = Vec::with_capacity(rows * input_len);
            for (input, _) in chunk {
                data.extend_from_slice(input);
            }
            let pred = self.forward_batch(&Tensor::new(vec![rows, input_len], data)?)?;
            for (row, (_, target)) in pred.data().chunks(input_len).zip(chunk) {
                for (p, t) in row.iter().zip(target) {
                    let diff = p - t;
                    total_sq += diff * diff;
                }
            }
        }
        Ok(total_sq / (set.len() * input_len) as f64)
    }
}
