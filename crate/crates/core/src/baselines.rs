//! Reference detectors: vanilla deep ensembles scored by the entropy of their
//! average prediction, and a discriminator between labeled and unlabeled data.

use alloc::vec::Vec;

use crate::datagen::Dataset;
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{early_stopped_train, fit_classifier, MlpArch, MlpClassifier, Model, TrainConfig};

/// Independently initialized classifiers trained on S alone.
#[derive(Debug, Clone, PartialEq)]
pub struct VanillaEnsemble {
    pub members: Vec<MlpClassifier>,
    pub stop_epochs: Vec<usize>,
}

impl Ensemble for VanillaEnsemble {
    fn members(&self) -> &[MlpClassifier] {
        &self.members
    }
}

/// `k` members with init/shuffle seeds `config.seed + i`, each early-stopped
/// on validation accuracy.
pub fn vanilla_fit(
    train: &Dataset,
    validation: &Dataset,
    k: usize,
    arch: &MlpArch,
    config: &TrainConfig,
) -> Result<VanillaEnsemble> {
    let seeds: Vec<u64> = (0..k as u64).map(|i| config.seed.wrapping_add(i)).collect();
    vanilla_fit_with_seeds(train, validation, arch, config, &seeds)
}

pub fn vanilla_fit_with_seeds(
    train: &Dataset,
    validation: &Dataset,
    arch: &MlpArch,
    config: &TrainConfig,
    seeds: &[u64],
) -> Result<VanillaEnsemble> {
    if seeds.is_empty() {
        return Err(Error::Arity {
            what: "vanilla ensemble members",
            min: 1,
            actual: 0,
        });
    }
    let mut members = Vec::with_capacity(seeds.len());
    let mut stop_epochs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let cfg = TrainConfig {
            seed,
            ..config.clone()
        };
        let fitted = fit_classifier(train, validation, arch, seed, &cfg)?;
        members.push(fitted.model);
        stop_epochs.push(fitted.stop_epoch);
    }
    Ok(VanillaEnsemble { members, stop_epochs })
}

/// Two-class model separating S (class 0) from U (class 1).
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDiscriminator {
    pub model: MlpClassifier,
    pub stop_epoch: usize,
    /// Fraction of the ID validation set predicted as class 0, per epoch
    /// (index 0 is the untrained model).
    pub val_id_accuracy: Vec<f64>,
}

impl BinaryDiscriminator {
    /// Probability of the unlabeled class.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(self.model.forward(x)?[1])
    }

    pub fn scores(&self, features: &Matrix) -> Result<Vec<f64>> {
        features.iter_rows().map(|x| self.score(x)).collect()
    }
}

fn class0_fraction(model: &MlpClassifier, data: &Dataset) -> Result<f64> {
    let mut hits = 0usize;
    for x in data.features().iter_rows() {
        hits += (model.predict(x)? == 0) as usize;
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Trains the discriminator with classes reweighted to equal total mass when
/// `|S| != |U|`. With `early_stopping` the checkpoint maximizing class-0
/// accuracy on `validation_id` is kept; otherwise the last epoch is.
pub fn binary_fit(
    train: &Dataset,
    unlabeled: &Dataset,
    validation_id: &Dataset,
    arch: &MlpArch,
    config: &TrainConfig,
    early_stopping: bool,
) -> Result<BinaryDiscriminator> {
    if unlabeled.is_empty() {
        return Err(Error::Arity {
            what: "unlabeled set",
            min: 1,
            actual: 0,
        });
    }
    if train.is_empty() || validation_id.is_empty() {
        return Err(Error::Arity {
            what: "training and validation sets",
            min: 1,
            actual: 0,
        });
    }
    let combined = train
        .relabeled(0)?
        .with_num_classes(2)?
        .concat(&unlabeled.relabeled(0)?.with_num_classes(2)?.relabeled(1)?)?;
    let (n_s, n_u) = (train.len(), unlabeled.len());
    let n = (n_s + n_u) as f64;
    let weights: Option<Vec<f64>> = (n_s != n_u).then(|| {
        let (w0, w1) = (n / (2.0 * n_s as f64), n / (2.0 * n_u as f64));
        (0..n_s + n_u).map(|i| if i < n_s { w0 } else { w1 }).collect()
    });
    let model = arch.build(train.dim(), 2, config.seed)?;
    let mut last: Option<MlpClassifier> = None;
    let stopped = early_stopped_train(model, &combined, weights.as_deref(), config, |epoch, m| {
        if !early_stopping && epoch == config.max_epochs {
            last = Some(m.clone());
        }
        class0_fraction(m, validation_id)
    })?;
    let (model, stop_epoch) = match last {
        Some(m) => (m, config.max_epochs),
        None => (stopped.model, stopped.stop_epoch),
    };
    Ok(BinaryDiscriminator {
        model,
        stop_epoch,
        val_id_accuracy: stopped.scores,
    })
}
