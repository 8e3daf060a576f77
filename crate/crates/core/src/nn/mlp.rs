use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{argmax, softmax_in_place, Activation, Batch, Gradients, Loss, Model};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

/// Fully connected softmax classifier.
///
/// `layer_dims = [d, h_1, ..., h_m, |Y|]`. Hidden layers use `activation`; the
/// output layer produces logits that are passed through a softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    layer_dims: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
}

/// Per-sample intermediate values kept for the backward pass.
struct Tape {
    /// Pre-activations of every layer, the last entry holding the logits.
    pre: Vec<Vec<f64>>,
    /// Post-activations of hidden layers, with the input at index 0.
    post: Vec<Vec<f64>>,
}

impl MlpClassifier {
    /// Gaussian initialization scaled by fan-in (He for ReLU, LeCun for tanh),
    /// zero biases.
    pub fn new(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        Self::validate_dims(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = match activation {
            Activation::Relu => 2.0,
            Activation::Tanh => 1.0,
        };
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let normal = Normal::new(0.0, libm::sqrt(gain / fan_in as f64))
                .map_err(|_| Error::InvalidArgument("bad init scale".into()))?;
            weights.push(Matrix::from_fn(fan_out, fan_in, |_, _| normal.sample(&mut rng)));
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            activation,
        })
    }

    /// Assembles a model from explicit parameters; weights are `out x in`.
    pub fn from_parameters(
        layer_dims: &[usize],
        activation: Activation,
        weights: Vec<Matrix>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        Self::validate_dims(layer_dims)?;
        let layers = layer_dims.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::Shape {
                context: "number of parameter layers",
                expected: layers,
                actual: weights.len().min(biases.len()),
            });
        }
        for (l, pair) in layer_dims.windows(2).enumerate() {
            let w = &weights[l];
            if w.rows() != pair[1] || w.cols() != pair[0] {
                return Err(Error::Shape {
                    context: "weight matrix size",
                    expected: pair[0] * pair[1],
                    actual: w.rows() * w.cols(),
                });
            }
            if biases[l].len() != pair[1] {
                return Err(Error::Shape {
                    context: "bias length",
                    expected: pair[1],
                    actual: biases[l].len(),
                });
            }
            if biases[l].iter().any(|b| !b.is_finite()) {
                return Err(Error::InvalidArgument("biases must be finite".into()));
            }
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            activation,
        })
    }

    fn validate_dims(layer_dims: &[usize]) -> Result<()> {
        if layer_dims.len() < 2 {
            return Err(Error::InvalidArgument(
                "an MLP needs at least an input and an output layer".into(),
            ));
        }
        if layer_dims.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        if *layer_dims.last().unwrap() < 2 {
            return Err(Error::InvalidArgument("need at least two output classes".into()));
        }
        Ok(())
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.layer_dims[0] {
            return Err(Error::Shape {
                context: "model input",
                expected: self.layer_dims[0],
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn run(&self, x: &[f64]) -> Result<Tape> {
        let layers = self.weights.len();
        let mut pre = Vec::with_capacity(layers);
        let mut post = Vec::with_capacity(layers);
        post.push(x.to_vec());
        for l in 0..layers {
            let w = &self.weights[l];
            let input = &post[l];
            let mut z = vec![0.0; w.rows()];
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = dot(w.row(j), input) + self.biases[l][j];
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: l });
            }
            if l + 1 < layers {
                post.push(z.iter().map(|&v| self.activation.apply(v)).collect());
            }
            pre.push(z);
        }
        Ok(Tape { pre, post })
    }

    /// Raw output-layer scores.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.run(x)?.pre.pop().unwrap())
    }

    /// Softmax class probabilities.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.logits(x)?;
        softmax_in_place(&mut z);
        Ok(z)
    }

    /// Softmax outputs for every row of `features`.
    pub fn predict_proba(&self, features: &Matrix) -> Result<Vec<Vec<f64>>> {
        features.iter_rows().map(|x| self.forward(x)).collect()
    }
}

impl Model for MlpClassifier {
    fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    fn num_classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Mean (sample-weighted) loss over the batch plus `l2 / 2 * sum ||W||^2`
    /// over weight matrices (biases are not penalized).
    fn loss_and_gradient(&self, batch: &Batch<'_>, loss: Loss, l2: f64) -> Result<(f64, Gradients)> {
        let layers = self.weights.len();
        let classes = self.num_classes();
        let mut grad_w: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.data().len()]).collect();
        let mut grad_b: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let scale = if batch.is_empty() {
            0.0
        } else {
            1.0 / batch.len() as f64
        };
        let mut total = 0.0;

        for (k, (&row, &target)) in batch.rows.iter().zip(batch.targets).enumerate() {
            if target >= classes {
                return Err(Error::InvalidArgument(alloc::format!(
                    "target {target} out of range for {classes} classes"
                )));
            }
            let x = batch.features.row(row);
            self.check_input(x)?;
            let weight = batch.weight(k) * scale;
            let tape = self.run(x)?;
            let mut probs = tape.pre[layers - 1].clone();
            softmax_in_place(&mut probs);

            // dL/dlogits for this sample
            let mut delta = vec![0.0; classes];
            match loss {
                Loss::CrossEntropy => {
                    total += weight * -libm::log(probs[target].max(f64::MIN_POSITIVE));
                    for (c, d) in delta.iter_mut().enumerate() {
                        let onehot = if c == target { 1.0 } else { 0.0 };
                        *d = weight * (probs[c] - onehot);
                    }
                }
                Loss::Squared => {
                    let resid: Vec<f64> = probs
                        .iter()
                        .enumerate()
                        .map(|(c, &p)| p - if c == target { 1.0 } else { 0.0 })
                        .collect();
                    total += weight * 0.5 * dot(&resid, &resid);
                    let pr = dot(&probs, &resid);
                    for (c, d) in delta.iter_mut().enumerate() {
                        *d = weight * probs[c] * (resid[c] - pr);
                    }
                }
            }

            for l in (0..layers).rev() {
                let input = &tape.post[l];
                let w = &self.weights[l];
                let gw = &mut grad_w[l];
                for (j, &dj) in delta.iter().enumerate() {
                    grad_b[l][j] += dj;
                    if dj != 0.0 {
                        let row = &mut gw[j * w.cols()..(j + 1) * w.cols()];
                        for (g, &a) in row.iter_mut().zip(input) {
                            *g += dj * a;
                        }
                    }
                }
                if l > 0 {
                    let mut next = vec![0.0; w.cols()];
                    for (j, &dj) in delta.iter().enumerate() {
                        if dj != 0.0 {
                            for (n, &wji) in next.iter_mut().zip(w.row(j)) {
                                *n += wji * dj;
                            }
                        }
                    }
                    for (n, &z) in next.iter_mut().zip(&tape.pre[l - 1]) {
                        *n *= self.activation.derivative(z);
                    }
                    delta = next;
                }
            }
        }

        if l2 > 0.0 {
            for (w, gw) in self.weights.iter().zip(grad_w.iter_mut()) {
                let sq: f64 = w.data().iter().map(|v| v * v).sum();
                total += 0.5 * l2 * sq;
                for (g, &v) in gw.iter_mut().zip(w.data()) {
                    *g += l2 * v;
                }
            }
        }

        let mut blocks = Vec::with_capacity(2 * layers);
        for (gw, gb) in grad_w.into_iter().zip(grad_b) {
            blocks.push(gw);
            blocks.push(gb);
        }
        let grads = Gradients { blocks };
        if !total.is_finite() || !grads.is_finite() {
            return Err(Error::NonFinite { layer: layers - 1 });
        }
        Ok((total, grads))
    }

    /// Blocks are `[W_1, b_1, W_2, b_2, ...]`.
    fn parameters(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.data());
            out.push(b.as_slice());
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.data_mut());
            out.push(b.as_mut_slice());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Model;

    fn zero_model(biases: [f64; 2]) -> MlpClassifier {
        MlpClassifier::from_parameters(
            &[3, 2],
            Activation::Relu,
            vec![Matrix::zeros(2, 3)],
            vec![biases.to_vec()],
        )
        .unwrap()
    }

    #[test]
    fn zero_model_is_uniform() {
        let p = zero_model([0.0, 0.0]).forward(&[1.0, -7.0, 3.5]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn bias_only_model_matches_hand_softmax() {
        // softmax(ln 3, 0) = (3/4, 1/4)
        let p = zero_model([libm::log(3.0), 0.0]).forward(&[0.0; 3]).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-15);
        assert!((p[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn wrong_input_length_is_a_shape_error() {
        let m = MlpClassifier::new(&[4, 5, 3], Activation::Tanh, 1).unwrap();
        assert!(matches!(m.forward(&[1.0; 3]), Err(Error::Shape { .. })));
    }

    #[test]
    fn rejects_single_class_output() {
        assert!(MlpClassifier::new(&[2, 1], Activation::Relu, 0).is_err());
        assert!(MlpClassifier::new(&[2], Activation::Relu, 0).is_err());
    }

    #[test]
    fn stationary_point_has_tiny_gradient() {
        // Logits (40, -40) make the prediction one-hot on class 0.
        let m = zero_model([40.0, -40.0]);
        let x = Matrix::from_rows(&[[0.3, 0.1, -0.2]]).unwrap();
        let batch = Batch {
            features: &x,
            rows: &[0],
            targets: &[0],
            weights: None,
        };
        let (_, g) = m.loss_and_gradient(&batch, Loss::CrossEntropy, 0.0).unwrap();
        assert!(g.l2_norm() < 1e-8);
    }

    #[test]
    fn overflowing_activations_report_the_layer() {
        let mut m = MlpClassifier::new(&[1, 2, 2], Activation::Relu, 3).unwrap();
        m.parameters_mut()[2].iter_mut().for_each(|w| *w = f64::MAX);
        let err = m.forward(&[f64::MAX]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }
}
