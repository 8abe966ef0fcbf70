//! Training loop, top-k evaluation and run reports.

mod eval;
mod report;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::Dataset;
use crate::nn::{checkpoint, AdamConfig, AdamState, ModelKind, Network, NnError, Real, Tensor};
use crate::raster::Raster;

pub use eval::{evaluate_topk, rank_classes, EvalReport, SamplePrediction, TopK};
pub use report::{read_report, write_report, RunReport, JSON_EXTENSION};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{0} dataset is empty")]
    EmptyDataset(&'static str),
    #[error("non-finite loss {loss} at epoch {epoch}, step {step}; try a smaller learning rate")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("report I/O on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed report {path}: {message}")]
    BadReport { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Seeds both weight init (by the caller) and the per-epoch shuffles.
    pub seed: u64,
    /// Stop after this many epochs without a validation-accuracy improvement.
    #[serde(default)]
    pub patience: Option<usize>,
}

impl TrainConfig {
    pub fn new(kind: ModelKind, epochs: usize) -> Self {
        Self {
            kind,
            batch_size: 128,
            epochs,
            lr: 1e-3,
            seed: 0,
            patience: None,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(TrainError::InvalidConfig(format!("learning rate {} must be positive", self.lr)));
        }
        if self.patience == Some(0) {
            return Err(TrainError::InvalidConfig("patience must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-sample loss over the epoch's steps.
    pub train_loss: f64,
    /// Top-1 accuracy accumulated during the epoch's steps.
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub network: Network<T>,
    pub history: Vec<EpochRecord>,
    /// Loss of the very first batch, before any update.
    pub initial_loss: f64,
    pub steps: u64,
}

/// Pixel intensities scaled to [0, 1] in the shape the model expects.
pub fn rasters_to_tensor<'a, T: Real>(
    images: impl IntoIterator<Item = &'a Raster>,
    kind: ModelKind,
) -> Tensor<T> {
    let scale = T::from_f64_lossy(1.0 / 255.0);
    let mut data = Vec::new();
    let mut n = 0;
    for img in images {
        data.extend(img.as_bytes().iter().map(|&p| T::from_f64_lossy(p as f64) * scale));
        n += 1;
    }
    let mut shape = vec![n];
    shape.extend(kind.input_shape());
    Tensor::new(shape, data).expect("raster tensor shape")
}

pub fn dataset_tensor<T: Real>(ds: &Dataset, kind: ModelKind) -> Tensor<T> {
    rasters_to_tensor(ds.samples.iter().map(|s| &s.image), kind)
}

fn gather<T: Real>(full: &Tensor<T>, indices: &[usize]) -> Tensor<T> {
    let row = full.row_len();
    let mut data = Vec::with_capacity(indices.len() * row);
    for &i in indices {
        data.extend_from_slice(full.row(i));
    }
    let mut shape = full.shape().to_vec();
    shape[0] = indices.len();
    Tensor::new(shape, data).expect("gathered batch shape")
}

/// Top-1 accuracy of `net` on `inputs`.
pub fn accuracy<T: Real>(net: &Network<T>, inputs: &Tensor<T>, labels: &[usize]) -> Result<f64, NnError> {
    let probs = net.predict(inputs)?;
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| rank_classes(probs.row(i))[0] == y)
        .count();
    Ok(hits as f64 / labels.len().max(1) as f64)
}

pub fn train<T: Real>(
    network: Network<T>,
    train_ds: &Dataset,
    val_ds: Option<&Dataset>,
    cfg: &TrainConfig,
    checkpoint_path: Option<&Path>,
) -> Result<TrainOutcome<T>, TrainError> {
    train_with_observer(network, train_ds, val_ds, cfg, checkpoint_path, |_| {})
}

/// `train`, calling `on_epoch` after each epoch's record is complete.
///
/// Each epoch draws a fresh permutation from a single ChaCha8 stream seeded
/// by `cfg.seed`, then takes ⌈n / batch⌉ Adam steps over consecutive slices.
pub fn train_with_observer<T: Real>(
    mut network: Network<T>,
    train_ds: &Dataset,
    val_ds: Option<&Dataset>,
    cfg: &TrainConfig,
    checkpoint_path: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>, TrainError> {
    cfg.validate()?;
    if train_ds.is_empty() {
        return Err(TrainError::EmptyDataset("training"));
    }
    if val_ds.is_some_and(|v| v.is_empty()) {
        return Err(TrainError::EmptyDataset("validation"));
    }
    let kind = network.spec().kind;
    let inputs: Tensor<T> = dataset_tensor(train_ds, kind);
    let labels = train_ds.labels();
    let val = val_ds.map(|v| (dataset_tensor::<T>(v, kind), v.labels()));

    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        network.params(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut initial_loss = None;
    let mut best_val = f64::NEG_INFINITY;
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (step, batch_idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = gather(&inputs, batch_idx);
            let batch_labels: Vec<usize> = batch_idx.iter().map(|&i| labels[i]).collect();
            let g = network.batch_gradients(&batch, &batch_labels)?;
            if !g.loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    step,
                    loss: g.loss,
                });
            }
            initial_loss.get_or_insert(g.loss);
            loss_sum += g.loss * batch_idx.len() as f64;
            correct += g.correct;
            adam.step(network.params_mut(), &g.grads)?;
        }
        let n = labels.len() as f64;
        let val_accuracy = match &val {
            Some((x, y)) => Some(accuracy(&network, x, y)?),
            None => None,
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            val_accuracy,
        };
        on_epoch(&record);
        history.push(record);

        if let (Some(patience), Some(v)) = (cfg.patience, val_accuracy) {
            if v > best_val {
                best_val = v;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    break;
                }
            }
        }
    }

    if let Some(path) = checkpoint_path {
        checkpoint::save(&network, path)?;
    }
    Ok(TrainOutcome {
        network,
        history,
        initial_loss: initial_loss.unwrap_or(f64::NAN),
        steps: adam.step,
    })
}
