use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, UNLABELED};
use crate::error::{Error, Result};

/// How to carve a labeled pool into the four novelty-detection splits.
///
/// The three fractions apply to the in-distribution pool: `train` goes to S,
/// `val` to V, and `unlabeled_id` forms a reservoir from which both the ID
/// part of U and the ID part of the held-out test mixture are drawn. The test
/// mixture has the same size and OOD proportion as U.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitParams {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub unlabeled_id_fraction: f64,
    pub ood_ratio: f64,
    pub unlabeled_size: usize,
    pub seed: u64,
}

/// Source-row indices of every split.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    /// True if no source row is used twice.
    pub fn is_disjoint(&self, source_len: usize) -> bool {
        let mut seen = alloc::vec![false; source_len];
        for &i in self
            .train
            .iter()
            .chain(&self.validation)
            .chain(&self.unlabeled)
            .chain(&self.test)
        {
            if i >= source_len || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitBundle {
    /// Labeled in-distribution training set S.
    pub train: Dataset,
    /// Labeled in-distribution validation set V.
    pub validation: Dataset,
    /// Unlabeled mixture U (all labels `-1`).
    pub unlabeled: Dataset,
    /// `true` for OOD members of U; for evaluation only.
    pub unlabeled_truth: Vec<bool>,
    /// Held-out mixture; ID rows keep their label, OOD rows are `-1`.
    pub test: Dataset,
    pub test_truth: Vec<bool>,
    pub indices: SplitIndices,
}

impl SplitBundle {
    pub fn num_classes(&self) -> usize {
        self.train.num_classes()
    }
}

fn count(fraction: f64, total: usize) -> usize {
    libm::round(fraction * total as f64) as usize
}

/// Builds S, V, U and a test mixture from points whose cluster membership
/// says which ones are OOD.
pub fn make_ssnd_split(
    points: &Dataset,
    cluster_assignment: &[usize],
    ood_cluster_flags: &[bool],
    params: &SplitParams,
) -> Result<SplitBundle> {
    if cluster_assignment.len() != points.len() {
        return Err(Error::Shape {
            context: "cluster assignment",
            expected: points.len(),
            actual: cluster_assignment.len(),
        });
    }
    if let Some(&c) = cluster_assignment.iter().find(|&&c| c >= ood_cluster_flags.len()) {
        return Err(Error::InvalidArgument(format!("cluster {c} has no OOD flag")));
    }
    let fractions = [
        params.train_fraction,
        params.val_fraction,
        params.unlabeled_id_fraction,
    ];
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::InvalidArgument(
            "split fractions must lie in [0, 1]".into(),
        ));
    }
    if !(0.0..=1.0).contains(&params.ood_ratio) {
        return Err(Error::InvalidArgument(format!(
            "ood_ratio {} outside [0, 1]",
            params.ood_ratio
        )));
    }

    let is_ood = |i: usize| ood_cluster_flags[cluster_assignment[i]];
    let mut id_pool: Vec<usize> = (0..points.len()).filter(|&i| !is_ood(i)).collect();
    let mut ood_pool: Vec<usize> = (0..points.len()).filter(|&i| is_ood(i)).collect();
    let num_classes = id_pool
        .iter()
        .map(|&i| points.labels()[i])
        .max()
        .map_or(0, |m| (m + 1) as usize);

    let n_id = id_pool.len();
    let n_train = count(params.train_fraction, n_id);
    let n_val = count(params.val_fraction, n_id);
    let n_reservoir = count(params.unlabeled_id_fraction, n_id);
    if n_train + n_val + n_reservoir > n_id {
        return Err(Error::InsufficientSamples {
            what: "train + validation + unlabeled ID fractions",
            needed: n_train + n_val + n_reservoir,
            available: n_id,
        });
    }
    if n_train == 0 || n_val == 0 {
        return Err(Error::InsufficientSamples {
            what: "non-empty train and validation sets",
            needed: 1,
            available: n_train.min(n_val),
        });
    }
    let n_ood = libm::round(params.ood_ratio * params.unlabeled_size as f64) as usize;
    let n_id_unlabeled = params.unlabeled_size - n_ood;
    if 2 * n_id_unlabeled > n_reservoir {
        return Err(Error::InsufficientSamples {
            what: "ID points for the unlabeled and test mixtures",
            needed: 2 * n_id_unlabeled,
            available: n_reservoir,
        });
    }
    if 2 * n_ood > ood_pool.len() {
        return Err(Error::InsufficientSamples {
            what: "OOD points for the unlabeled and test mixtures",
            needed: 2 * n_ood,
            available: ood_pool.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    id_pool.shuffle(&mut rng);
    ood_pool.shuffle(&mut rng);

    let train_idx = id_pool[..n_train].to_vec();
    let val_idx = id_pool[n_train..n_train + n_val].to_vec();
    let reservoir = &id_pool[n_train + n_val..n_train + n_val + n_reservoir];
    let mut unlabeled_idx: Vec<usize> = reservoir[..n_id_unlabeled]
        .iter()
        .chain(&ood_pool[..n_ood])
        .copied()
        .collect();
    let mut test_idx: Vec<usize> = reservoir[n_id_unlabeled..2 * n_id_unlabeled]
        .iter()
        .chain(&ood_pool[n_ood..2 * n_ood])
        .copied()
        .collect();
    unlabeled_idx.shuffle(&mut rng);
    test_idx.shuffle(&mut rng);

    let labeled = |idx: &[usize]| points.subset(idx).with_num_classes(num_classes);
    let train = labeled(&train_idx)?;
    let validation = labeled(&val_idx)?;
    let unlabeled = points
        .subset(&unlabeled_idx)
        .relabeled(UNLABELED)?
        .with_num_classes(num_classes)?;
    let unlabeled_truth = unlabeled_idx.iter().map(|&i| is_ood(i)).collect();
    let test_truth: Vec<bool> = test_idx.iter().map(|&i| is_ood(i)).collect();
    let test_labels = test_idx
        .iter()
        .map(|&i| if is_ood(i) { UNLABELED } else { points.labels()[i] })
        .collect();
    let test = Dataset::new(points.features().select_rows(&test_idx), test_labels, num_classes)?;

    Ok(SplitBundle {
        train,
        validation,
        unlabeled,
        unlabeled_truth,
        test,
        test_truth,
        indices: SplitIndices {
            train: train_idx,
            validation: val_idx,
            unlabeled: unlabeled_idx,
            test: test_idx,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn pool(n_id: usize, n_ood: usize) -> (Dataset, Vec<usize>) {
        let n = n_id + n_ood;
        let f = Matrix::from_fn(n, 2, |i, j| (i * 2 + j) as f64);
        let labels = (0..n)
            .map(|i| if i < n_id { (i % 2) as i64 } else { 2 })
            .collect();
        let assign = (0..n).map(|i| if i < n_id { i % 2 } else { 2 }).collect();
        (Dataset::new(f, labels, 3).unwrap(), assign)
    }

    fn params(ood_ratio: f64, unlabeled_size: usize) -> SplitParams {
        SplitParams {
            train_fraction: 0.4,
            val_fraction: 0.1,
            unlabeled_id_fraction: 0.5,
            ood_ratio,
            unlabeled_size,
            seed: 3,
        }
    }

    #[test]
    fn half_ood_split_counts() {
        let (pts, assign) = pool(20_000, 10_000);
        let b = make_ssnd_split(&pts, &assign, &[false, false, true], &params(0.5, 10_000)).unwrap();
        assert_eq!(b.unlabeled.len(), 10_000);
        assert_eq!(b.unlabeled_truth.iter().filter(|&&t| t).count(), 5000);
        assert_eq!(b.test_truth.iter().filter(|&&t| t).count(), 5000);
        assert!(b.indices.is_disjoint(pts.len()));
        assert!(b.unlabeled.labels().iter().all(|&l| l == -1));
        assert_eq!(b.num_classes(), 2);
        assert!(b.train.labels().iter().all(|&l| l == 0 || l == 1));
    }

    #[test]
    fn zero_ratio_has_no_ood() {
        let (pts, assign) = pool(400, 50);
        let b = make_ssnd_split(&pts, &assign, &[false, false, true], &params(0.0, 100)).unwrap();
        assert!(b.unlabeled_truth.iter().all(|&t| !t));
        assert!(b.test_truth.iter().all(|&t| !t));
    }

    #[test]
    fn over_committed_fractions_fail() {
        let (pts, assign) = pool(100, 20);
        let mut p = params(0.1, 10);
        p.train_fraction = 0.8;
        let err = make_ssnd_split(&pts, &assign, &[false, false, true], &p).unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples { .. }));
        let err = make_ssnd_split(&pts, &assign, &[false, false, true], &params(0.9, 20)).unwrap_err();
        assert!(
            matches!(
                err,
                Error::InsufficientSamples {
                    needed: 36,
                    available: 20,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn train_and_validation_exclude_ood_clusters() {
        let (pts, assign) = pool(300, 100);
        let flags = [false, false, true];
        let b = make_ssnd_split(&pts, &assign, &flags, &params(0.25, 80)).unwrap();
        for &i in b.indices.train.iter().chain(&b.indices.validation) {
            assert!(!flags[assign[i]]);
        }
    }
}
