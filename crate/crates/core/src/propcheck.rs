//! Empirical check of the early-stopping guarantee on clusterable data.
//!
//! The unlabeled in-distribution points play the role of label noise: every
//! unlabeled point (ID or OOD) is trained with the artificial label `c`. The
//! unlabeled ID points whose cluster label differs from `c` form the wrongly
//! labeled set W̃; those whose cluster label equals `c` form C̃. A run succeeds
//! if some gradient step fits S, C̃ and the OOD points perfectly while every
//! point of W̃ still decodes to its true label.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datagen::{generate_clusterable, ClusterLayout, Dataset};
use crate::error::{Error, Result};
use crate::nn::{
    sgd_train, theory_schedule, Activation, BatchSize, Loss, Model, ScheduleParams, TheoryNet, TrainConfig,
};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PropCheckConfig {
    pub num_clusters: usize,
    /// The last `num_ood_clusters` clusters are OOD.
    pub num_ood_clusters: usize,
    /// In-distribution classes `|Y|`; ID cluster `i` gets label `i mod |Y|`.
    pub num_classes: usize,
    pub dim: usize,
    pub epsilon: f64,
    /// Fraction of every ID cluster that is unlabeled.
    pub rho: f64,
    pub num_samples: usize,
    pub hidden_units: usize,
    /// Step-size constant. With output weights `1/p` a gradient step moves
    /// the outputs `p` times less than under `1/sqrt(p)` scaling, so the
    /// default equals `hidden_units`.
    pub c2: f64,
    pub c4: f64,
    pub mc_samples: usize,
    /// Steps scanned: `scan_factor * t_stop`.
    pub scan_factor: usize,
    pub seeds: Vec<u64>,
    /// Fixed artificial label; drawn per seed when `None`.
    pub artificial_label: Option<usize>,
}

impl Default for PropCheckConfig {
    fn default() -> Self {
        Self {
            num_clusters: 6,
            num_ood_clusters: 2,
            num_classes: 3,
            dim: 16,
            epsilon: 0.05,
            rho: 0.05,
            num_samples: 1200,
            hidden_units: 128,
            c2: 128.0,
            c4: 1.0,
            mc_samples: 20_000,
            scan_factor: 3,
            seeds: (0..20).collect(),
            artificial_label: None,
        }
    }
}

/// Accuracies after one gradient step. Fractions of empty sets are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PropStep {
    pub step: usize,
    pub acc_labeled: f64,
    pub acc_correct_unlabeled: Option<f64>,
    pub acc_ood_as_c: Option<f64>,
    /// Fraction of W̃ that decodes to its true label.
    pub noisy_true_label: Option<f64>,
}

impl PropStep {
    pub fn is_success(&self) -> bool {
        let full = |v: Option<f64>| v.is_none_or(|a| a == 1.0);
        self.acc_labeled == 1.0
            && full(self.acc_correct_unlabeled)
            && full(self.acc_ood_as_c)
            && full(self.noisy_true_label)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SeedOutcome {
    pub seed: u64,
    pub artificial_label: usize,
    pub eta: f64,
    pub t_stop: usize,
    pub sigma_min: f64,
    pub steps_scanned: usize,
    pub first_success_step: Option<usize>,
    pub curve: Vec<PropStep>,
}

impl SeedOutcome {
    pub fn success(&self) -> bool {
        self.first_success_step.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PropCheckReport {
    pub outcomes: Vec<SeedOutcome>,
    pub success_rate: f64,
}

/// Largest admissible `rho`: `delta / 8` with the label margin
/// `delta = 2 / (|Y| - 1)` of evenly spaced targets in `[-1, 1]`.
pub fn max_rho(num_classes: usize) -> f64 {
    2.0 / (num_classes as f64 - 1.0) / 8.0
}

pub fn check_preconditions(config: &PropCheckConfig) -> Result<()> {
    if config.num_classes < 2 {
        return Err(Error::InvalidArgument("need at least two classes".into()));
    }
    if config.num_ood_clusters >= config.num_clusters
        || config.num_clusters - config.num_ood_clusters < config.num_classes
    {
        return Err(Error::InvalidArgument(format!(
            "{} clusters with {} OOD cannot cover {} classes",
            config.num_clusters, config.num_ood_clusters, config.num_classes
        )));
    }
    if config.num_samples < config.num_clusters {
        return Err(Error::InsufficientSamples {
            what: "clusterable points",
            needed: config.num_clusters,
            available: config.num_samples,
        });
    }
    if config.scan_factor == 0 || config.seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "scan factor and seed list must be non-empty".into(),
        ));
    }
    if let Some(c) = config.artificial_label {
        if c >= config.num_classes {
            return Err(Error::InvalidArgument(format!(
                "artificial label {c} outside [0, {})",
                config.num_classes
            )));
        }
    }
    let bound = max_rho(config.num_classes);
    if !(config.rho >= 0.0 && config.rho <= bound) {
        return Err(Error::Precondition(format!(
            "rho {} exceeds delta / 8 = {bound}",
            config.rho
        )));
    }
    Ok(())
}

impl PropCheckConfig {
    pub fn layout(&self) -> ClusterLayout {
        ClusterLayout {
            num_clusters: self.num_clusters,
            num_ood_clusters: self.num_ood_clusters,
            num_classes: self.num_classes,
            dim: self.dim,
            epsilon: self.epsilon,
            rho: self.rho,
            total_points: self.num_samples,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Labeled,
    CorrectUnlabeled,
    NoisyUnlabeled,
    Ood,
}

/// Runs the check for a single seed.
pub fn run_seed(config: &PropCheckConfig, seed: u64) -> Result<SeedOutcome> {
    check_preconditions(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (centers_seed, data_seed, net_seed, mc_seed): (u64, u64, u64, u64) =
        (rng.random(), rng.random(), rng.random(), rng.random());
    let c = match config.artificial_label {
        Some(c) => c,
        None => rng.random_range(0..config.num_classes),
    };

    let spec = config.layout().spec(centers_seed, data_seed)?;
    let data = generate_clusterable(&spec)?;
    let n = data.points.len();
    let mut labels = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut roles = Vec::with_capacity(n);
    for i in 0..n {
        let cluster = data.cluster_assignment[i];
        let cluster_label = spec.cluster_labels[cluster];
        let role = if spec.ood_cluster_flags[cluster] {
            Role::Ood
        } else if !data.noisy[i] {
            Role::Labeled
        } else if cluster_label == c {
            Role::CorrectUnlabeled
        } else {
            Role::NoisyUnlabeled
        };
        labels.push(if role == Role::Labeled {
            cluster_label as i64
        } else {
            c as i64
        });
        truth.push(cluster_label);
        roles.push(role);
    }
    let train = Dataset::new(data.points.features().clone(), labels, config.num_classes)?;

    let schedule = theory_schedule(
        &spec.centers,
        Activation::Tanh,
        &ScheduleParams {
            num_samples: n,
            c2: config.c2,
            c4: config.c4,
            mc_samples: config.mc_samples,
            seed: mc_seed,
        },
    )?;
    let steps = config.scan_factor * schedule.t_stop;
    let mut net = TheoryNet::new(
        config.hidden_units,
        config.dim,
        config.num_classes,
        Activation::Tanh,
        net_seed,
    )?;
    let train_config = TrainConfig {
        learning_rate: schedule.eta,
        batch_size: BatchSize::Full,
        max_epochs: steps,
        seed: net_seed,
        l2_coefficient: 0.0,
        loss: Loss::Squared,
    };

    let mut curve = Vec::with_capacity(steps);
    sgd_train(&mut net, &train, &train_config, |record, model| {
        let mut hits = [0usize; 4];
        let mut totals = [0usize; 4];
        for (i, x) in train.features().iter_rows().enumerate() {
            let pred = model.predict(x)?;
            let (slot, expected) = match roles[i] {
                Role::Labeled => (0, truth[i]),
                Role::CorrectUnlabeled => (1, c),
                Role::NoisyUnlabeled => (2, truth[i]),
                Role::Ood => (3, c),
            };
            totals[slot] += 1;
            hits[slot] += (pred == expected) as usize;
        }
        let frac = |s: usize| (totals[s] > 0).then(|| hits[s] as f64 / totals[s] as f64);
        curve.push(PropStep {
            step: record.epoch,
            acc_labeled: frac(0).unwrap_or(1.0),
            acc_correct_unlabeled: frac(1),
            acc_ood_as_c: frac(3),
            noisy_true_label: frac(2),
        });
        Ok(())
    })?;

    let first_success_step = curve.iter().find(|s| s.is_success()).map(|s| s.step);
    Ok(SeedOutcome {
        seed,
        artificial_label: c,
        eta: schedule.eta,
        t_stop: schedule.t_stop,
        sigma_min: schedule.sigma_min,
        steps_scanned: steps,
        first_success_step,
        curve,
    })
}

pub fn run_propcheck(config: &PropCheckConfig) -> Result<PropCheckReport> {
    check_preconditions(config)?;
    let outcomes = config
        .seeds
        .iter()
        .map(|&s| run_seed(config, s))
        .collect::<Result<Vec<_>>>()?;
    let wins = outcomes.iter().filter(|o| o.success()).count();
    Ok(PropCheckReport {
        success_rate: wins as f64 / outcomes.len() as f64,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn small() -> PropCheckConfig {
        PropCheckConfig {
            num_samples: 240,
            hidden_units: 32,
            c2: 32.0,
            mc_samples: 2000,
            seeds: vec![0],
            ..PropCheckConfig::default()
        }
    }

    #[test]
    fn rho_bound_for_three_classes() {
        assert_eq!(max_rho(3), 0.125);
        let bad = PropCheckConfig { rho: 0.5, ..small() };
        assert!(matches!(check_preconditions(&bad), Err(Error::Precondition(_))));
        assert!(check_preconditions(&small()).is_ok());
    }

    #[test]
    fn noise_free_run_has_no_noisy_points() {
        let cfg = PropCheckConfig { rho: 0.0, ..small() };
        let out = run_seed(&cfg, 3).unwrap();
        assert_eq!(out.steps_scanned, 3 * out.t_stop);
        assert_eq!(out.curve.len(), out.steps_scanned);
        assert!(out
            .curve
            .iter()
            .all(|s| s.noisy_true_label.is_none() && s.acc_correct_unlabeled.is_none()));
    }

    #[test]
    fn rejects_too_few_id_clusters() {
        let cfg = PropCheckConfig {
            num_ood_clusters: 4,
            ..small()
        };
        assert!(check_preconditions(&cfg).is_err());
    }
}
