//! Ensembles with regularized disagreement: fitting, disagreement scores and
//! thresholded novelty detection.

mod fit;
mod grid;
mod stats;

use alloc::vec::Vec;

pub use fit::{erd_fit, ErdData, ErdEnsemble, ErdEpochRecord, LabelChoice};
pub use grid::{grid_eval, Bounds2d, GridPoint};
pub use stats::{disagreement_statistic, entropy_avg_statistic, tv_distance};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::MlpClassifier;

/// Aggregation of member outputs into one novelty score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Statistic {
    /// Mean pairwise total variation distance.
    TdisTv,
    /// Entropy of the averaged softmax output.
    EntropyAvg,
}

impl Statistic {
    pub fn evaluate<P: AsRef<[f64]>>(self, outputs: &[P]) -> Result<f64> {
        match self {
            Statistic::TdisTv => disagreement_statistic(outputs),
            Statistic::EntropyAvg => entropy_avg_statistic(outputs),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Statistic::TdisTv => "tdis_tv",
            Statistic::EntropyAvg => "entropy_avg",
        }
    }
}

/// Anything made of softmax classifiers that vote on the same input.
pub trait Ensemble {
    fn members(&self) -> &[MlpClassifier];

    fn score(&self, x: &[f64], statistic: Statistic) -> Result<f64> {
        let outputs = self
            .members()
            .iter()
            .map(|m| m.forward(x))
            .collect::<Result<Vec<_>>>()?;
        statistic.evaluate(&outputs)
    }

    fn scores(&self, features: &Matrix, statistic: Statistic) -> Result<Vec<f64>> {
        features.iter_rows().map(|x| self.score(x, statistic)).collect()
    }
}

impl Ensemble for [MlpClassifier] {
    fn members(&self) -> &[MlpClassifier] {
        self
    }
}

impl Ensemble for Vec<MlpClassifier> {
    fn members(&self) -> &[MlpClassifier] {
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub scores: Vec<f64>,
    /// `flagged[i]` iff `scores[i] > threshold`.
    pub flagged: Vec<bool>,
    pub threshold: f64,
}

impl DetectionResult {
    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }
}

/// Flags every test point whose ensemble statistic exceeds `threshold`.
pub fn detect<E: Ensemble + ?Sized>(
    ensemble: &E,
    test: &Dataset,
    threshold: f64,
    statistic: Statistic,
) -> Result<DetectionResult> {
    let members = ensemble.members();
    if members.is_empty() {
        return Err(Error::Arity {
            what: "ensemble members",
            min: 1,
            actual: 0,
        });
    }
    if test.dim() != members[0].layer_dims()[0] {
        return Err(Error::Shape {
            context: "test features",
            expected: members[0].layer_dims()[0],
            actual: test.dim(),
        });
    }
    let scores = ensemble.scores(test.features(), statistic)?;
    let flagged = scores.iter().map(|&s| s > threshold).collect();
    Ok(DetectionResult {
        scores,
        flagged,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use alloc::vec;

    fn members() -> Vec<MlpClassifier> {
        (0..3)
            .map(|s| MlpClassifier::new(&[2, 6, 3], Activation::Relu, s).unwrap())
            .collect()
    }

    fn test_set() -> Dataset {
        let f = Matrix::from_fn(25, 2, |i, j| ((i * 3 + j * 5) % 11) as f64 - 5.0);
        Dataset::new(f, vec![-1; 25], 3).unwrap()
    }

    #[test]
    fn bounds_on_threshold() {
        let e = members();
        let none = detect(&e, &test_set(), 1.0, Statistic::TdisTv).unwrap();
        assert_eq!(none.flagged_count(), 0);
        let all = detect(&e, &test_set(), -1.0, Statistic::TdisTv).unwrap();
        assert_eq!(all.flagged_count(), 25);
        for (s, f) in all.scores.iter().zip(&none.flagged) {
            assert!((0.0..=1.0).contains(s));
            assert!(!f);
        }
    }

    #[test]
    fn empty_ensemble_is_an_arity_error() {
        let e: Vec<MlpClassifier> = Vec::new();
        assert!(matches!(
            detect(&e, &test_set(), 0.5, Statistic::EntropyAvg),
            Err(Error::Arity { .. })
        ));
    }

    #[test]
    fn raising_threshold_only_unflags() {
        let e = members();
        let mut prev: Option<Vec<bool>> = None;
        for t in [0.0, 0.05, 0.1, 0.2, 0.4, 0.8] {
            let r = detect(&e, &test_set(), t, Statistic::TdisTv).unwrap();
            if let Some(p) = prev {
                assert!(r.flagged.iter().zip(&p).all(|(&now, &before)| !now || before));
            }
            prev = Some(r.flagged);
        }
    }
}
