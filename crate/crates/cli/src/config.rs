//! JSON run configurations.
//!
//! Every command reads one config file. Commands that need data or models
//! refer to an [`ExperimentSpec`], either by preset name or inline; anything
//! not supplied as a file (bundle, checkpoints) is recomputed in memory from
//! the experiment, so a config alone determines every output.

use std::path::PathBuf;

use erd_core::datagen::{ClusterLayout, ToyTask};
use erd_core::ensemble::Statistic;
use erd_core::nn::{BatchSize, Loss, MlpArch, TrainConfig};
use erd_core::propcheck::PropCheckConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::presets;

/// Optimizer settings without a seed; seeds are derived from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub learning_rate: f64,
    pub batch_size: BatchSize,
    pub max_epochs: usize,
    pub l2_coefficient: f64,
    pub loss: Loss,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            max_epochs: d.max_epochs,
            l2_coefficient: d.l2_coefficient,
            loss: d.loss,
        }
    }
}

impl TrainSpec {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            seed,
            l2_coefficient: self.l2_coefficient,
            loss: self.loss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// Random unit centers; ID cluster `i` is labeled `i mod num_classes`.
    Clusterable {
        num_clusters: usize,
        num_ood_clusters: usize,
        num_classes: usize,
        dim: usize,
        epsilon: f64,
        rho: f64,
        cluster_size: usize,
    },
    /// Two-class 2D task with a planted OOD region.
    Toy {
        task: ToyTask,
        n_id: usize,
        n_ood: usize,
        noise: f64,
    },
}

impl DataSpec {
    pub fn layout(&self) -> Option<ClusterLayout> {
        match *self {
            DataSpec::Clusterable {
                num_clusters,
                num_ood_clusters,
                num_classes,
                dim,
                epsilon,
                rho,
                cluster_size,
            } => Some(ClusterLayout {
                num_clusters,
                num_ood_clusters,
                num_classes,
                dim,
                epsilon,
                rho,
                total_points: num_clusters * cluster_size,
            }),
            DataSpec::Toy { .. } => None,
        }
    }

    /// Number of ID classes the generated data will carry.
    pub fn num_classes(&self) -> usize {
        match *self {
            DataSpec::Clusterable { num_classes, .. } => num_classes,
            DataSpec::Toy { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub unlabeled_id_fraction: f64,
    pub ood_ratio: f64,
    pub unlabeled_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErdSpec {
    pub k: usize,
    /// Explicit artificial labels; drawn from the run seed when absent.
    #[serde(default)]
    pub labels: Option<Vec<usize>>,
    pub train: TrainSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VanillaSpec {
    pub k: usize,
    pub train: TrainSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinarySpec {
    pub train: TrainSpec,
    #[serde(default = "yes")]
    pub early_stopping: bool,
}

fn yes() -> bool {
    true
}

/// Everything needed to go from a seed to trained detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub seed: u64,
    pub data: DataSpec,
    pub split: SplitSpec,
    pub arch: MlpArch,
    pub pretrain: TrainSpec,
    pub erd: ErdSpec,
    pub vanilla: VanillaSpec,
    pub binary: BinarySpec,
}

impl ExperimentSpec {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// A preset name or a full inline experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExperimentRef {
    Preset(String),
    Inline(Box<ExperimentSpec>),
}

impl ExperimentRef {
    pub fn resolve(&self) -> Result<ExperimentSpec> {
        match self {
            ExperimentRef::Preset(name) => presets::experiment(name),
            ExperimentRef::Inline(spec) => Ok((**spec).clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub experiment: ExperimentRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub experiment: ExperimentRef,
    /// Split bundle directory; regenerated from the experiment when absent.
    #[serde(default)]
    pub bundle: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErdConfig {
    pub experiment: ExperimentRef,
    #[serde(default)]
    pub bundle: Option<PathBuf>,
    /// Pretrained checkpoint; pretrained in memory when absent.
    #[serde(default)]
    pub pretrained: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Vanilla,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub experiment: ExperimentRef,
    #[serde(default)]
    pub bundle: Option<PathBuf>,
    pub method: BaselineMethod,
}

/// One detector to evaluate. Missing model paths mean "train it in memory".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScorerSpec {
    Erd {
        #[serde(default)]
        ensemble: Option<PathBuf>,
        statistic: Statistic,
    },
    Vanilla {
        #[serde(default)]
        ensemble: Option<PathBuf>,
        statistic: Statistic,
    },
    Binary {
        #[serde(default)]
        model: Option<PathBuf>,
    },
}

impl ScorerSpec {
    /// Stable name used for output subdirectories and report keys.
    pub fn name(&self) -> String {
        match self {
            ScorerSpec::Erd { statistic, .. } => format!("erd_{}", statistic.name()),
            ScorerSpec::Vanilla { statistic, .. } => format!("vanilla_{}", statistic.name()),
            ScorerSpec::Binary { .. } => "binary".into(),
        }
    }
}

pub fn default_scorers() -> Vec<ScorerSpec> {
    vec![
        ScorerSpec::Erd {
            ensemble: None,
            statistic: Statistic::TdisTv,
        },
        ScorerSpec::Vanilla {
            ensemble: None,
            statistic: Statistic::EntropyAvg,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub experiment: ExperimentRef,
    #[serde(default)]
    pub bundle: Option<PathBuf>,
    #[serde(default = "default_scorers")]
    pub scorers: Vec<ScorerSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    OodRatio,
    UnlabeledSize,
    EnsembleSize,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::OodRatio => "ood_ratio",
            SweepAxis::UnlabeledSize => "unlabeled_size",
            SweepAxis::EnsembleSize => "ensemble_size",
        }
    }

    /// The experiment with this axis set to `value`.
    pub fn apply(self, spec: &ExperimentSpec, value: f64) -> Result<ExperimentSpec> {
        let mut out = spec.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
                Ok(v as usize)
            } else {
                Err(CliError::Config(format!(
                    "{} values must be non-negative integers, got {v}",
                    self.name()
                )))
            }
        };
        match self {
            SweepAxis::OodRatio => out.split.ood_ratio = value,
            SweepAxis::UnlabeledSize => out.split.unlabeled_size = count(value)?,
            SweepAxis::EnsembleSize => out.erd.k = count(value)?,
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub experiment: ExperimentRef,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Run seeds averaged per axis value; the experiment seed when empty.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "tdis")]
    pub statistic: Statistic,
}

fn tdis() -> Statistic {
    Statistic::TdisTv
}

/// `propcheck` takes the verifier config directly; `{}` is the default preset.
pub type PropcheckConfig = PropCheckConfig;
