use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Ensemble;
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::nn::{accuracy, early_stopped_train, MlpClassifier, Model, TrainConfig};

/// Which artificial label each member assigns to the unlabeled set.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LabelChoice {
    Explicit(Vec<usize>),
    /// `K` labels drawn without replacement.
    Random {
        seed: u64,
    },
}

impl LabelChoice {
    pub fn resolve(&self, k: usize, num_classes: usize) -> Result<Vec<usize>> {
        if k < 2 {
            return Err(Error::Arity {
                what: "ensemble members",
                min: 2,
                actual: k,
            });
        }
        if k > num_classes {
            return Err(Error::LabelExhaustion {
                requested: k,
                available: num_classes,
            });
        }
        match self {
            LabelChoice::Explicit(labels) => {
                if labels.len() != k {
                    return Err(Error::InvalidArgument(format!(
                        "{} explicit labels given for {k} members",
                        labels.len()
                    )));
                }
                for (i, &l) in labels.iter().enumerate() {
                    if l >= num_classes {
                        return Err(Error::InvalidArgument(format!(
                            "artificial label {l} outside [0, {num_classes})"
                        )));
                    }
                    if labels[..i].contains(&l) {
                        return Err(Error::InvalidArgument(format!(
                            "artificial label {l} is repeated"
                        )));
                    }
                }
                Ok(labels.clone())
            }
            LabelChoice::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok(index::sample(&mut rng, num_classes, k).into_vec())
            }
        }
    }
}

/// Per-epoch diagnostics of one member's fine-tuning. Epoch 0 describes the
/// pretrained weights.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErdEpochRecord {
    pub epoch: usize,
    pub val_accuracy: f64,
    pub acc_on_train: f64,
    /// Fraction of U predicted as the artificial label (`None` if U is empty).
    pub acc_unlabeled_c: Option<f64>,
    /// Same, restricted to OOD points of U (needs ground truth).
    pub acc_unlabeled_c_ood: Option<f64>,
    /// Same, restricted to ID points of U (needs ground truth).
    pub acc_unlabeled_c_id: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErdEnsemble {
    pub members: Vec<MlpClassifier>,
    pub artificial_labels: Vec<usize>,
    pub stop_epochs: Vec<usize>,
    pub traces: Vec<Vec<ErdEpochRecord>>,
}

impl Ensemble for ErdEnsemble {
    fn members(&self) -> &[MlpClassifier] {
        &self.members
    }
}

/// Inputs to [`erd_fit`].
#[derive(Debug, Clone, Copy)]
pub struct ErdData<'a> {
    pub train: &'a Dataset,
    pub unlabeled: &'a Dataset,
    pub validation: &'a Dataset,
    /// OOD flags for `unlabeled`; only used to enrich the traces.
    pub unlabeled_truth: Option<&'a [bool]>,
}

fn fraction(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| hits as f64 / total as f64)
}

/// Fine-tunes one copy of `pretrained` per artificial label `c` on
/// `S + {(x, c) : x in U}` and keeps, for each, the epoch (>= 1) with the
/// best validation accuracy, the earliest on ties.
pub fn erd_fit(
    pretrained: &MlpClassifier,
    data: &ErdData<'_>,
    k: usize,
    labels: &LabelChoice,
    config: &TrainConfig,
) -> Result<ErdEnsemble> {
    let num_classes = pretrained.num_classes();
    let artificial_labels = labels.resolve(k, num_classes)?;
    for (name, set) in [
        ("train", data.train),
        ("validation", data.validation),
        ("unlabeled", data.unlabeled),
    ] {
        if !set.is_empty() && set.dim() != pretrained.input_dim() {
            return Err(Error::InvalidArgument(format!(
                "{name} set has dimension {}, model expects {}",
                set.dim(),
                pretrained.input_dim()
            )));
        }
    }
    if data.unlabeled.labels().iter().any(|&l| l != -1) {
        return Err(Error::InvalidArgument("unlabeled set carries labels".into()));
    }
    if let Some(truth) = data.unlabeled_truth {
        if truth.len() != data.unlabeled.len() {
            return Err(Error::Shape {
                context: "unlabeled truth",
                expected: data.unlabeled.len(),
                actual: truth.len(),
            });
        }
    }

    let mut members = Vec::with_capacity(k);
    let mut stop_epochs = Vec::with_capacity(k);
    let mut traces = Vec::with_capacity(k);
    for (i, &c) in artificial_labels.iter().enumerate() {
        let combined = data
            .train
            .concat(&data.unlabeled.relabeled(c as i64)?)?
            .with_num_classes(num_classes)?;
        let member_config = TrainConfig {
            seed: config.seed.wrapping_add(i as u64),
            ..config.clone()
        };
        let mut trace = Vec::with_capacity(config.max_epochs + 1);
        let stopped = early_stopped_train(
            pretrained.clone(),
            &combined,
            None,
            &member_config,
            |epoch, model: &MlpClassifier| {
                let record = epoch_record(model, epoch, c, data)?;
                trace.push(record);
                Ok(record.val_accuracy)
            },
        )?;
        members.push(stopped.model);
        stop_epochs.push(stopped.stop_epoch);
        traces.push(trace);
    }
    Ok(ErdEnsemble {
        members,
        artificial_labels,
        stop_epochs,
        traces,
    })
}

fn epoch_record(model: &MlpClassifier, epoch: usize, c: usize, data: &ErdData<'_>) -> Result<ErdEpochRecord> {
    let val_accuracy = accuracy(model, data.validation)?;
    let acc_on_train = accuracy(model, data.train)?;
    let (mut hits, mut hits_ood, mut n_ood, mut hits_id, mut n_id) = (0, 0, 0, 0, 0);
    for (j, x) in data.unlabeled.features().iter_rows().enumerate() {
        let hit = model.predict(x)? == c;
        hits += hit as usize;
        if let Some(truth) = data.unlabeled_truth {
            if truth[j] {
                n_ood += 1;
                hits_ood += hit as usize;
            } else {
                n_id += 1;
                hits_id += hit as usize;
            }
        }
    }
    Ok(ErdEpochRecord {
        epoch,
        val_accuracy,
        acc_on_train,
        acc_unlabeled_c: fraction(hits, data.unlabeled.len()),
        acc_unlabeled_c_ood: fraction(hits_ood, n_ood),
        acc_unlabeled_c_id: fraction(hits_id, n_id),
    })
}
