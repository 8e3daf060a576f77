//! Datasets and synthetic data: clusterable point clouds, 2D toy tasks, and
//! the labeled / validation / unlabeled / test split used for novelty
//! detection.

mod clusterable;
mod split;
mod toy;

use alloc::format;
use alloc::vec::Vec;

pub use clusterable::{
    generate_clusterable, random_unit_centers, validate_clusterable, ClusterLayout, ClusterableData,
    ClusterableSpec,
};
pub use split::{make_ssnd_split, SplitBundle, SplitIndices, SplitParams};
pub use toy::{make_toy_2d, make_toy_2d_with_ood, ToyTask, ToyWithOod};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Label value marking an unlabeled sample.
pub const UNLABELED: i64 = -1;

/// Feature matrix with one integer label per row (`-1` = unlabeled).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<i64>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<i64>, num_classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Shape {
                context: "dataset labels",
                expected: features.rows(),
                actual: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l < UNLABELED || l >= num_classes as i64) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside {{-1, 0, .., {}}}",
                num_classes as i64 - 1
            )));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    /// A dataset with no rows; used for degenerate splits such as an empty
    /// unlabeled set.
    pub fn empty(dim: usize, num_classes: usize) -> Self {
        Self {
            features: Matrix::zeros(0, dim),
            labels: Vec::new(),
            num_classes,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Same points, every label replaced by `label`.
    pub fn relabeled(&self, label: i64) -> Result<Self> {
        Self::new(
            self.features.clone(),
            alloc::vec![label; self.len()],
            self.num_classes,
        )
    }

    pub fn with_num_classes(self, num_classes: usize) -> Result<Self> {
        Self::new(self.features, self.labels, num_classes)
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        let features = self.features.vstack(&other.features)?;
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Self::new(features, labels, self.num_classes.max(other.num_classes))
    }

    /// Per-class mean of the features (`None` for classes without samples).
    pub fn class_means(&self) -> Vec<Option<Vec<f64>>> {
        let mut sums = alloc::vec![alloc::vec![0.0; self.dim()]; self.num_classes];
        let mut counts = alloc::vec![0usize; self.num_classes];
        for (x, &l) in self.features.iter_rows().zip(&self.labels) {
            if l >= 0 {
                let l = l as usize;
                counts[l] += 1;
                for (s, v) in sums[l].iter_mut().zip(x) {
                    *s += v;
                }
            }
        }
        sums.into_iter()
            .zip(counts)
            .map(|(s, c)| (c > 0).then(|| s.into_iter().map(|v| v / c as f64).collect()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn validates_labels() {
        let f = Matrix::zeros(2, 1);
        assert!(Dataset::new(f.clone(), vec![0, 2], 2).is_err());
        assert!(Dataset::new(f.clone(), vec![-2, 0], 2).is_err());
        assert!(Dataset::new(f.clone(), vec![0], 2).is_err());
        assert!(Dataset::new(f, vec![-1, 1], 2).is_ok());
    }

    #[test]
    fn concat_and_subset() {
        let a = Dataset::new(Matrix::from_rows(&[[1.0], [2.0]]).unwrap(), vec![0, 1], 2).unwrap();
        let b = a.relabeled(-1).unwrap();
        let c = a.concat(&b).unwrap();
        assert_eq!(c.labels(), &[0, 1, -1, -1]);
        assert_eq!(c.subset(&[3, 0]).features().data(), &[2.0, 1.0]);
        assert_eq!(Dataset::empty(1, 2).concat(&a).unwrap().len(), 2);
    }
}
