//! Small dense networks trained with mini-batch gradient descent.
//!
//! Two model families share the [`Model`] trait:
//!
//! * [`MlpClassifier`], a softmax multilayer perceptron used for the
//!   practical ensembles and baselines;
//! * [`TheoryNet`], the scalar-output two-layer network `v^T phi(W x)` with a
//!   frozen output layer, used to check the early-stopping guarantee on
//!   clusterable data.

mod mlp;
mod theory;
mod train;

use alloc::vec::Vec;

pub use mlp::MlpClassifier;
pub use theory::{theory_schedule, ScheduleParams, TheoryNet, TheorySchedule};
pub use train::{
    accuracy, early_stopped_train, sgd_train, sgd_train_weighted, BatchSize, EarlyStopped, EpochRecord,
    TrainConfig,
};

use crate::linalg::Matrix;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => libm::tanh(z),
        }
    }

    /// First derivative evaluated at the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = libm::tanh(z);
                1.0 - t * t
            }
        }
    }

    /// Bound `Gamma` on `|phi'|` and `|phi''|`, if both derivatives are bounded.
    pub fn derivative_bound(self) -> Option<f64> {
        match self {
            // |tanh'| <= 1 and |tanh''| <= 4 / (3 sqrt 3) < 1
            Activation::Tanh => Some(1.0),
            Activation::Relu => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Loss {
    CrossEntropy,
    Squared,
}

/// A set of rows of a feature matrix together with their integer targets.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub features: &'a Matrix,
    /// Row indices into `features`.
    pub rows: &'a [usize],
    /// Target class per entry of `rows`.
    pub targets: &'a [usize],
    /// Optional per-entry sample weight.
    pub weights: Option<&'a [f64]>,
}

impl<'a> Batch<'a> {
    #[inline]
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    #[inline]
    pub fn weight(&self, k: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[k])
    }
}

/// Parameter gradients, one block per trainable parameter array, in the order
/// returned by [`Model::parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn l2_norm(&self) -> f64 {
        libm::sqrt(self.blocks.iter().flat_map(|b| b.iter()).map(|g| g * g).sum())
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().flatten().all(|g| g.is_finite())
    }
}

pub trait Model: Clone {
    fn input_dim(&self) -> usize;

    fn num_classes(&self) -> usize;

    /// Predicted class for one feature vector.
    fn predict(&self, x: &[f64]) -> Result<usize>;

    /// Batch loss (including the L2 penalty) and its gradient.
    fn loss_and_gradient(&self, batch: &Batch<'_>, loss: Loss, l2: f64) -> Result<(f64, Gradients)>;

    /// Trainable parameter blocks. Frozen parameters are not listed.
    fn parameters(&self) -> Vec<&[f64]>;

    fn parameters_mut(&mut self) -> Vec<&mut [f64]>;

    /// Applies `theta -= lr * grad` to every trainable block.
    fn apply_gradients(&mut self, grads: &Gradients, learning_rate: f64) {
        for (params, grad) in self.parameters_mut().into_iter().zip(&grads.blocks) {
            for (p, g) in params.iter_mut().zip(grad) {
                *p -= learning_rate * g;
            }
        }
    }
}

/// Numerically stable softmax, in place.
pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Hidden-layer layout of an [`MlpClassifier`].
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MlpArch {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for MlpArch {
    /// Two hidden layers of 100 ReLU units.
    fn default() -> Self {
        Self {
            hidden: alloc::vec![100, 100],
            activation: Activation::Relu,
        }
    }
}

impl MlpArch {
    pub fn layer_dims(&self, input_dim: usize, num_classes: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(&self.hidden);
        dims.push(num_classes);
        dims
    }

    pub fn build(&self, input_dim: usize, num_classes: usize, seed: u64) -> Result<MlpClassifier> {
        MlpClassifier::new(&self.layer_dims(input_dim, num_classes), self.activation, seed)
    }
}

/// Trains a fresh classifier on `train` and keeps the epoch with the best
/// accuracy on `validation`. `init_seed` drives the weight initialization.
pub fn fit_classifier(
    train: &crate::datagen::Dataset,
    validation: &crate::datagen::Dataset,
    arch: &MlpArch,
    init_seed: u64,
    config: &TrainConfig,
) -> Result<EarlyStopped<MlpClassifier>> {
    let model = arch.build(train.dim(), train.num_classes(), init_seed)?;
    early_stopped_train(model, train, None, config, |_, m| accuracy(m, validation))
}
