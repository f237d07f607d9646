//! Training loop, evaluation, sweeps and training-fraction runs.

mod splits;
mod sweep;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use splits::{default_dev_size, Prepared, Splits};
pub use sweep::{
    fraction_experiment, load_grid, read_records, sweep, FractionRecord, GridFile, GridSpec, SweepOptions, SweepRecord,
};

use crate::data::EncodedDataset;
use crate::embed::EmbedMode;
use crate::error::{Error, Result};
use crate::model::{Architecture, ModelConfig, DEFAULT_HIDDEN, DEFAULT_TAU};
use crate::seq::CellKind;
use crate::tensor_core::{Adam, AdamConfig, ParamStore, Rng, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: EmbedMode,
    pub cell: CellKind,
    pub hidden: usize,
    pub tau: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub max_len: usize,
    /// Stratified fraction of the training set actually used.
    pub data_fraction: f64,
    /// Global gradient-norm clip; off by default.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: EmbedMode::Se { v: 3000, m: 8 },
            cell: CellKind::Lstm,
            hidden: DEFAULT_HIDDEN,
            tau: DEFAULT_TAU,
            lr: AdamConfig::default().lr,
            batch_size: 32,
            max_epochs: 20,
            patience: 3,
            seed: 0,
            max_len: u32::MAX as usize,
            data_fraction: 1.0,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn with_mode(mode: EmbedMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn model_config(&self, classes: usize) -> ModelConfig {
        ModelConfig {
            mode: self.mode,
            cell: self.cell,
            hidden: self.hidden,
            classes,
            tau: self.tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mode.validate()?;
        if !(self.tau > 0.0) {
            return Err(Error::invalid(format!(
                "temperature must be positive, got {}",
                self.tau
            )));
        }
        if !(self.lr > 0.0) || self.batch_size == 0 || self.max_epochs == 0 || self.hidden == 0 {
            return Err(Error::invalid(
                "lr, batch size, epochs and hidden size must be positive",
            ));
        }
        if !(self.data_fraction > 0.0 && self.data_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "data fraction {} must be in (0, 1]",
                self.data_fraction
            )));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::invalid("clip norm must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub arch: Architecture,
    /// Parameters from the best dev epoch.
    pub store: ParamStore<f32>,
    pub history: Vec<EpochStats>,
    /// Index into `history` of the selected epoch.
    pub best_epoch: usize,
    pub best_dev_acc: f64,
    pub train_size: usize,
    pub wall_clock_secs: f64,
}

impl TrainResult {
    pub fn evaluate(&self, data: &EncodedDataset) -> Result<f64> {
        evaluate(&self.arch, &self.store, data)
    }
}

fn check_ids(data: &EncodedDataset, limit: usize, what: &str) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset(what.into()));
    }
    if let Some(&id) = data.sequences.iter().flatten().find(|&&id| id as usize >= limit) {
        return Err(Error::IdOutOfRange { id: id as usize, limit });
    }
    Ok(())
}

/// Trains with Adam on shuffled minibatches and keeps the parameters of the
/// epoch with the best dev accuracy (earliest on ties). Stops after
/// `max_epochs` or when `patience` epochs pass without improvement.
///
/// Randomness comes from three streams of one seed: initialization, batch
/// order and Gumbel noise, so a run is reproducible bit for bit.
pub fn train(config: &TrainConfig, train_set: &EncodedDataset, dev: &EncodedDataset) -> Result<TrainResult> {
    config.validate()?;
    let start = Instant::now();
    let limit = config.mode.v() + 1;
    check_ids(train_set, limit, "training set")?;
    check_ids(dev, limit, "dev set")?;
    if dev.num_classes != train_set.num_classes {
        return Err(Error::invalid("train and dev class counts differ"));
    }
    let subset;
    let train_set = if config.data_fraction < 1.0 {
        subset = train_set.subsample(config.data_fraction, config.seed)?;
        if subset.is_empty() {
            return Err(Error::EmptyDataset("training subsample".into()));
        }
        &subset
    } else {
        train_set
    };

    let root = Rng::new(config.seed);
    let mut init_rng = root.fork(0);
    let mut order_rng = root.fork(1);
    let mut noise_rng = root.fork(2);

    let mut store = ParamStore::<f32>::new();
    let arch = Architecture::new(config.model_config(train_set.num_classes), &mut store, &mut init_rng)?;
    let mut adam = Adam::new(AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    });

    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, ParamStore<f32>)> = None;
    let mut since_best = 0;

    for epoch in 0..config.max_epochs {
        order_rng.shuffle(&mut order);
        let mut total = 0.0f64;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let seqs: Vec<&[u32]> = chunk.iter().map(|&i| train_set.sequences[i].as_slice()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_set.labels[i]).collect();
            let mut tape = Tape::new();
            let loss = arch.batch_loss(&mut tape, &store, &seqs, &labels, Some(&mut noise_rng))?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: value,
                });
            }
            total += value as f64 * chunk.len() as f64;
            tape.backward(loss, &mut store)?;
            if let Some(max) = config.clip_norm {
                let norm = store.grad_norm();
                if norm > max {
                    store.scale_grads((max / norm) as f32);
                }
            }
            adam.step(&mut store).map_err(|e| match e {
                Error::NonFinite(_) => Error::Diverged {
                    epoch,
                    batch: b,
                    loss: value,
                },
                e => e,
            })?;
        }
        let dev_acc = evaluate(&arch, &store, dev)?;
        history.push(EpochStats {
            epoch,
            train_loss: total / n as f64,
            dev_acc,
        });
        if best.as_ref().is_none_or(|(_, acc, _)| dev_acc > *acc) {
            best = Some((epoch, dev_acc, store.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    let (best_epoch, best_dev_acc, mut store) = best.expect("at least one epoch");
    store.zero_grads();
    Ok(TrainResult {
        arch,
        store,
        history,
        best_epoch,
        best_dev_acc,
        train_size: n,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Accuracy of hard-assignment predictions. Uses no randomness.
pub fn evaluate(arch: &Architecture, store: &ParamStore<f32>, data: &EncodedDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("evaluation set".into()));
    }
    let mut correct = 0usize;
    for (seq, &label) in data.sequences.iter().zip(&data.labels) {
        if arch.predict_eval(store, seq)? == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Accuracy when the noise-free relaxation `softmax(a/τ)` is kept at test
/// time. The difference to [`evaluate`] measures how far training stayed
/// from hard assignments.
pub fn evaluate_soft(arch: &Architecture, store: &ParamStore<f32>, data: &EncodedDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("evaluation set".into()));
    }
    let mut correct = 0usize;
    for (seq, &label) in data.sequences.iter().zip(&data.labels) {
        if arch.predict_soft(store, seq)? == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
