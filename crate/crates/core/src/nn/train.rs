use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Batch, Loss, Model};
use crate::datagen::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Size(usize),
}

#[cfg(feature = "serde")]
mod batch_size_serde {
    use super::BatchSize;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Size(usize),
        Name(alloc::string::String),
    }

    impl Serialize for BatchSize {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            match *self {
                BatchSize::Full => s.serialize_str("full"),
                BatchSize::Size(n) => s.serialize_u64(n as u64),
            }
        }
    }

    impl<'de> Deserialize<'de> for BatchSize {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            match Repr::deserialize(d)? {
                Repr::Size(n) => Ok(BatchSize::Size(n)),
                Repr::Name(name) if name == "full" => Ok(BatchSize::Full),
                Repr::Name(other) => Err(serde::de::Error::custom(alloc::format!(
                    "batch_size must be a positive integer or \"full\", got {other:?}"
                ))),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: BatchSize,
    pub max_epochs: usize,
    /// Seeds the per-epoch shuffling.
    pub seed: u64,
    pub l2_coefficient: f64,
    pub loss: Loss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: BatchSize::Size(32),
            max_epochs: 20,
            seed: 0,
            l2_coefficient: 0.0,
            loss: Loss::CrossEntropy,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // A zero step is allowed; it leaves the weights untouched.
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidArgument("max_epochs must be at least 1".into()));
        }
        if !(self.l2_coefficient.is_finite() && self.l2_coefficient >= 0.0) {
            return Err(Error::InvalidArgument(
                "l2_coefficient must be non-negative".into(),
            ));
        }
        if self.batch_size == BatchSize::Size(0) {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    /// 1-based index of the completed epoch.
    pub epoch: usize,
    pub mean_loss: f64,
}

fn class_targets(train: &Dataset, num_classes: usize) -> Result<Vec<usize>> {
    train
        .labels()
        .iter()
        .map(|&l| {
            if l < 0 || l as usize >= num_classes {
                Err(Error::InvalidArgument(format!(
                    "training label {l} outside [0, {num_classes})"
                )))
            } else {
                Ok(l as usize)
            }
        })
        .collect()
}

/// Mini-batch gradient descent over `train`, reshuffled every epoch.
///
/// `on_epoch` runs after each completed epoch. Shuffling is driven only by
/// `config.seed`, so identical inputs give bit-identical weights.
pub fn sgd_train<M, F>(
    model: &mut M,
    train: &Dataset,
    config: &TrainConfig,
    on_epoch: F,
) -> Result<Vec<EpochRecord>>
where
    M: Model,
    F: FnMut(&EpochRecord, &M) -> Result<()>,
{
    train_impl(model, train, None, config, on_epoch)
}

/// [`sgd_train`] with one loss weight per training sample.
pub fn sgd_train_weighted<M, F>(
    model: &mut M,
    train: &Dataset,
    sample_weights: &[f64],
    config: &TrainConfig,
    on_epoch: F,
) -> Result<Vec<EpochRecord>>
where
    M: Model,
    F: FnMut(&EpochRecord, &M) -> Result<()>,
{
    if sample_weights.len() != train.len() {
        return Err(Error::Shape {
            context: "sample weights",
            expected: train.len(),
            actual: sample_weights.len(),
        });
    }
    if sample_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument(
            "sample weights must be non-negative".into(),
        ));
    }
    train_impl(model, train, Some(sample_weights), config, on_epoch)
}

fn train_impl<M, F>(
    model: &mut M,
    train: &Dataset,
    sample_weights: Option<&[f64]>,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<Vec<EpochRecord>>
where
    M: Model,
    F: FnMut(&EpochRecord, &M) -> Result<()>,
{
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Arity {
            what: "training set",
            min: 1,
            actual: 0,
        });
    }
    if train.dim() != model.input_dim() {
        return Err(Error::Shape {
            context: "training features",
            expected: model.input_dim(),
            actual: train.dim(),
        });
    }
    let targets = class_targets(train, model.num_classes())?;
    let n = train.len();
    let batch = match config.batch_size {
        BatchSize::Full => n,
        BatchSize::Size(b) => b.min(n),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch_targets = Vec::with_capacity(batch);
    let mut batch_weights = Vec::with_capacity(batch);
    let mut trace = Vec::with_capacity(config.max_epochs);

    for epoch in 1..=config.max_epochs {
        if batch < n {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for rows in order.chunks(batch) {
            batch_targets.clear();
            batch_targets.extend(rows.iter().map(|&r| targets[r]));
            if let Some(w) = sample_weights {
                batch_weights.clear();
                batch_weights.extend(rows.iter().map(|&r| w[r]));
            }
            let b = Batch {
                features: train.features(),
                rows,
                targets: &batch_targets,
                weights: sample_weights.map(|_| batch_weights.as_slice()),
            };
            let (loss, grads) = model
                .loss_and_gradient(&b, config.loss, config.l2_coefficient)
                .map_err(|e| match e {
                    Error::NonFinite { .. } => Error::Diverged { epoch },
                    other => other,
                })?;
            if config.learning_rate != 0.0 {
                model.apply_gradients(&grads, config.learning_rate);
            }
            loss_sum += loss * rows.len() as f64;
        }
        let mean_loss = loss_sum / n as f64;
        let finite_params = model.parameters().iter().all(|p| p.iter().all(|v| v.is_finite()));
        if !mean_loss.is_finite() || !finite_params {
            return Err(Error::Diverged { epoch });
        }
        let record = EpochRecord { epoch, mean_loss };
        on_epoch(&record, model)?;
        trace.push(record);
    }
    Ok(trace)
}

/// Fraction of labeled samples the model classifies correctly.
pub fn accuracy<M: Model>(model: &M, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Arity {
            what: "accuracy evaluation set",
            min: 1,
            actual: 0,
        });
    }
    let mut correct = 0usize;
    for (x, &label) in data.features().iter_rows().zip(data.labels()) {
        if label < 0 {
            return Err(Error::InvalidArgument("accuracy needs labeled samples".into()));
        }
        if model.predict(x)? == label as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Outcome of training with checkpoint selection.
#[derive(Debug, Clone)]
pub struct EarlyStopped<M> {
    /// Model at the selected epoch.
    pub model: M,
    pub stop_epoch: usize,
    /// Selection score per epoch; index 0 is the untrained model.
    pub scores: Vec<f64>,
    pub trace: Vec<EpochRecord>,
}

/// Trains for `config.max_epochs` epochs and keeps the checkpoint with the
/// highest `score` among epochs `>= 1`, the earliest one on ties.
pub fn early_stopped_train<M, S>(
    mut model: M,
    train: &Dataset,
    sample_weights: Option<&[f64]>,
    config: &TrainConfig,
    mut score: S,
) -> Result<EarlyStopped<M>>
where
    M: Model,
    S: FnMut(usize, &M) -> Result<f64>,
{
    let mut scores = Vec::with_capacity(config.max_epochs + 1);
    scores.push(score(0, &model)?);
    let mut best: Option<(usize, f64, M)> = None;
    let callback = |rec: &EpochRecord, m: &M| -> Result<()> {
        let s = score(rec.epoch, m)?;
        scores.push(s);
        if best.as_ref().is_none_or(|(_, b, _)| s > *b) {
            best = Some((rec.epoch, s, m.clone()));
        }
        Ok(())
    };
    let trace = match sample_weights {
        Some(w) => sgd_train_weighted(&mut model, train, w, config, callback)?,
        None => sgd_train(&mut model, train, config, callback)?,
    };
    let (stop_epoch, _, model) = best.expect("at least one epoch is trained");
    Ok(EarlyStopped {
        model,
        stop_epoch,
        scores,
        trace,
    })
}
