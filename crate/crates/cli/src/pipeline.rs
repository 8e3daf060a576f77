//! In-memory experiment stages: generate, pretrain, fit detectors, score,
//! evaluate. Commands wrap these with file IO.
//!
//! Every random choice is seeded from the run seed through a separate
//! ChaCha stream per stage, so changing one stage never perturbs another.

use erd_core::baselines::{binary_fit, vanilla_fit, BinaryDiscriminator, VanillaEnsemble};
use erd_core::datagen::{
    generate_clusterable, make_ssnd_split, make_toy_2d_with_ood, validate_clusterable, SplitBundle,
    SplitParams,
};
use erd_core::ensemble::{erd_fit, Ensemble, ErdData, ErdEnsemble, LabelChoice, Statistic};
use erd_core::metrics::{roc, threshold_for_fpr, RocReport};
use erd_core::nn::{fit_classifier, EarlyStopped, MlpClassifier};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{DataSpec, ExperimentSpec};
use crate::error::{CliError, Result};
use crate::io::BundleMeta;

/// FPR used for the reported operating threshold.
pub const TARGET_FPR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stage {
    Data = 1,
    Centers = 2,
    Split = 3,
    Pretrain = 4,
    Erd = 5,
    Labels = 6,
    Vanilla = 7,
    Binary = 8,
}

pub fn stage_seed(run_seed: u64, stage: Stage) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(stage as u64);
    rng.next_u64()
}

pub fn split_params(spec: &ExperimentSpec) -> SplitParams {
    SplitParams {
        train_fraction: spec.split.train_fraction,
        val_fraction: spec.split.val_fraction,
        unlabeled_id_fraction: spec.split.unlabeled_id_fraction,
        ood_ratio: spec.split.ood_ratio,
        unlabeled_size: spec.split.unlabeled_size,
        seed: stage_seed(spec.seed, Stage::Split),
    }
}

/// Draws the data and carves it into S, V, U and the test mixture.
/// Clusterable draws are re-validated against their spec.
pub fn generate(spec: &ExperimentSpec) -> Result<(SplitBundle, BundleMeta)> {
    let data_seed = stage_seed(spec.seed, Stage::Data);
    let params = split_params(spec);
    let bundle = match &spec.data {
        DataSpec::Clusterable { .. } => {
            let layout = spec.data.layout().expect("clusterable data has a layout");
            let cspec = layout.spec(stage_seed(spec.seed, Stage::Centers), data_seed)?;
            let data = generate_clusterable(&cspec)?;
            validate_clusterable(&data, &cspec)?;
            make_ssnd_split(
                &data.points,
                &data.cluster_assignment,
                &cspec.ood_cluster_flags,
                &params,
            )?
        }
        &DataSpec::Toy {
            task,
            n_id,
            n_ood,
            noise,
        } => {
            let toy = make_toy_2d_with_ood(task, n_id, n_ood, noise, data_seed)?;
            make_ssnd_split(
                &toy.points,
                &toy.cluster_assignment,
                &toy.ood_cluster_flags,
                &params,
            )?
        }
    };
    let meta = BundleMeta::new(&spec.name, spec.seed, &spec.data, params, &bundle);
    Ok((bundle, meta))
}

pub fn pretrain(spec: &ExperimentSpec, bundle: &SplitBundle) -> Result<EarlyStopped<MlpClassifier>> {
    let seed = stage_seed(spec.seed, Stage::Pretrain);
    Ok(fit_classifier(
        &bundle.train,
        &bundle.validation,
        &spec.arch,
        seed,
        &spec.pretrain.with_seed(seed),
    )?)
}

pub fn label_choice(spec: &ExperimentSpec) -> LabelChoice {
    match &spec.erd.labels {
        Some(labels) => LabelChoice::Explicit(labels.clone()),
        None => LabelChoice::Random {
            seed: stage_seed(spec.seed, Stage::Labels),
        },
    }
}

pub fn fit_erd(
    spec: &ExperimentSpec,
    bundle: &SplitBundle,
    pretrained: &MlpClassifier,
) -> Result<ErdEnsemble> {
    let data = ErdData {
        train: &bundle.train,
        unlabeled: &bundle.unlabeled,
        validation: &bundle.validation,
        unlabeled_truth: Some(&bundle.unlabeled_truth),
    };
    let config = spec.erd.train.with_seed(stage_seed(spec.seed, Stage::Erd));
    Ok(erd_fit(
        pretrained,
        &data,
        spec.erd.k,
        &label_choice(spec),
        &config,
    )?)
}

pub fn vanilla_seed(spec: &ExperimentSpec) -> u64 {
    stage_seed(spec.seed, Stage::Vanilla)
}

pub fn fit_vanilla(spec: &ExperimentSpec, bundle: &SplitBundle) -> Result<VanillaEnsemble> {
    let config = spec.vanilla.train.with_seed(vanilla_seed(spec));
    Ok(vanilla_fit(
        &bundle.train,
        &bundle.validation,
        spec.vanilla.k,
        &spec.arch,
        &config,
    )?)
}

pub fn binary_seed(spec: &ExperimentSpec) -> u64 {
    stage_seed(spec.seed, Stage::Binary)
}

pub fn fit_binary(spec: &ExperimentSpec, bundle: &SplitBundle) -> Result<BinaryDiscriminator> {
    let config = spec.binary.train.with_seed(binary_seed(spec));
    Ok(binary_fit(
        &bundle.train,
        &bundle.unlabeled,
        &bundle.validation,
        &spec.arch,
        &config,
        spec.binary.early_stopping,
    )?)
}

/// Scores of one detector on the validation set (all ID) and the test mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub validation: Vec<f64>,
    pub test: Vec<f64>,
}

pub fn ensemble_scores<E: Ensemble + ?Sized>(
    ensemble: &E,
    bundle: &SplitBundle,
    statistic: Statistic,
) -> Result<Scores> {
    Ok(Scores {
        validation: ensemble.scores(bundle.validation.features(), statistic)?,
        test: ensemble.scores(bundle.test.features(), statistic)?,
    })
}

pub fn binary_scores(model: &BinaryDiscriminator, bundle: &SplitBundle) -> Result<Scores> {
    Ok(Scores {
        validation: model.scores(bundle.validation.features())?,
        test: model.scores(bundle.test.features())?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub auroc: f64,
    pub tnr_at_tpr95: f64,
    /// Threshold giving FPR <= 0.05 on the validation set.
    pub threshold_at_fpr05: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub roc: RocReport,
    pub summary: MetricSummary,
}

pub fn split_by_truth(scores: &[f64], truth: &[bool]) -> Result<(Vec<f64>, Vec<f64>)> {
    if scores.len() != truth.len() {
        return Err(CliError::Config(format!(
            "{} scores for {} truth flags",
            scores.len(),
            truth.len()
        )));
    }
    let mut id = Vec::new();
    let mut ood = Vec::new();
    for (&s, &t) in scores.iter().zip(truth) {
        if t {
            ood.push(s);
        } else {
            id.push(s);
        }
    }
    Ok((id, ood))
}

pub fn evaluate(scores: &Scores, test_truth: &[bool]) -> Result<Evaluation> {
    let (id, ood) = split_by_truth(&scores.test, test_truth)?;
    let report = roc(&id, &ood)?;
    let threshold = threshold_for_fpr(&scores.validation, TARGET_FPR)?;
    Ok(Evaluation {
        summary: MetricSummary {
            auroc: report.auroc,
            tnr_at_tpr95: report.tnr_at_tpr95,
            threshold_at_fpr05: threshold,
        },
        roc: report,
    })
}

/// Trains ERD on a freshly generated bundle and evaluates it with `statistic`.
pub fn run_erd(spec: &ExperimentSpec, statistic: Statistic) -> Result<(Evaluation, ErdEnsemble)> {
    let (bundle, _) = generate(spec)?;
    let pretrained = pretrain(spec, &bundle)?;
    let ensemble = fit_erd(spec, &bundle, &pretrained.model)?;
    let eval = evaluate(
        &ensemble_scores(&ensemble, &bundle, statistic)?,
        &bundle.test_truth,
    )?;
    Ok((eval, ensemble))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_seeds_differ_and_repeat() {
        let a = stage_seed(7, Stage::Data);
        assert_eq!(a, stage_seed(7, Stage::Data));
        assert_ne!(a, stage_seed(7, Stage::Split));
        assert_ne!(a, stage_seed(8, Stage::Data));
    }

    #[test]
    fn split_by_truth_partitions() {
        let (id, ood) = split_by_truth(&[0.1, 0.9, 0.2], &[false, true, false]).unwrap();
        assert_eq!(id, vec![0.1, 0.2]);
        assert_eq!(ood, vec![0.9]);
        assert!(split_by_truth(&[0.1], &[]).is_err());
    }
}
