//! The two-layer scalar network `x -> v^T phi(W x)` and the step-size /
//! stopping-time schedule that goes with it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Activation, Batch, Gradients, Loss, Model};
use crate::error::{Error, Result};
use crate::linalg::{dot, min_symmetric_eigenvalue, norm, Matrix};

/// Two-layer network with `p` hidden units and a frozen output layer.
///
/// The first half of `v` is `+1/p` and the second half `-1/p`. Class `k` of
/// `|Y|` classes is embedded as the scalar `-1 + 2k / (|Y| - 1)` and
/// predictions decode to the nearest such target.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryNet {
    w: Matrix,
    v: Vec<f64>,
    activation: Activation,
    label_values: Vec<f64>,
}

impl TheoryNet {
    /// `W` entries drawn i.i.d. from N(0, 1).
    pub fn new(
        hidden: usize,
        input_dim: usize,
        num_classes: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Matrix::from_fn(hidden, input_dim, |_, _| StandardNormal.sample(&mut rng));
        Self::with_weights(w, num_classes, activation)
    }

    pub fn with_weights(w: Matrix, num_classes: usize, activation: Activation) -> Result<Self> {
        let p = w.rows();
        if p == 0 || !p.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "hidden unit count must be even and positive, got {p}"
            )));
        }
        if w.cols() == 0 {
            return Err(Error::InvalidArgument("input dimension must be positive".into()));
        }
        if activation.derivative_bound().is_none() {
            return Err(Error::InvalidArgument(format!(
                "activation {} lacks bounded first and second derivatives",
                activation.name()
            )));
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        let inv_p = 1.0 / p as f64;
        let v = (0..p).map(|r| if r < p / 2 { inv_p } else { -inv_p }).collect();
        let label_values = (0..num_classes)
            .map(|k| -1.0 + 2.0 * k as f64 / (num_classes - 1) as f64)
            .collect();
        Ok(Self {
            w,
            v,
            activation,
            label_values,
        })
    }

    pub fn hidden_units(&self) -> usize {
        self.w.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.w
    }

    pub fn output_weights(&self) -> &[f64] {
        &self.v
    }

    pub fn label_values(&self) -> &[f64] {
        &self.label_values
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Scalar network output `f(x; W)`.
    pub fn output(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.w.cols() {
            return Err(Error::Shape {
                context: "model input",
                expected: self.w.cols(),
                actual: x.len(),
            });
        }
        let f: f64 = self
            .w
            .iter_rows()
            .zip(&self.v)
            .map(|(row, &vr)| vr * self.activation.apply(dot(row, x)))
            .sum();
        if !f.is_finite() {
            return Err(Error::NonFinite { layer: 0 });
        }
        Ok(f)
    }

    /// Index of the label value closest to `value` (ties go to the lower class).
    pub fn decode(&self, value: f64) -> usize {
        let mut best = 0;
        for (k, &t) in self.label_values.iter().enumerate() {
            if libm::fabs(value - t) < libm::fabs(value - self.label_values[best]) {
                best = k;
            }
        }
        best
    }
}

impl Model for TheoryNet {
    fn input_dim(&self) -> usize {
        self.w.cols()
    }

    fn num_classes(&self) -> usize {
        self.label_values.len()
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(self.decode(self.output(x)?))
    }

    /// `1/2 * sum_i w_i (y_i - f(x_i; W))^2 + l2/2 * ||W||^2`, summed rather
    /// than averaged over the batch. Only squared loss is defined here.
    fn loss_and_gradient(&self, batch: &Batch<'_>, loss: Loss, l2: f64) -> Result<(f64, Gradients)> {
        if loss != Loss::Squared {
            return Err(Error::InvalidArgument(
                "the scalar two-layer network trains with squared loss only".into(),
            ));
        }
        let (p, d) = (self.w.rows(), self.w.cols());
        let mut grad = vec![0.0; p * d];
        let mut pre = vec![0.0; p];
        let mut total = 0.0;
        for (k, (&row, &target)) in batch.rows.iter().zip(batch.targets).enumerate() {
            let y = *self
                .label_values
                .get(target)
                .ok_or_else(|| Error::InvalidArgument(format!("target {target} out of range")))?;
            let x = batch.features.row(row);
            if x.len() != d {
                return Err(Error::Shape {
                    context: "model input",
                    expected: d,
                    actual: x.len(),
                });
            }
            self.w.matvec_into(x, &mut pre);
            let f: f64 = pre
                .iter()
                .zip(&self.v)
                .map(|(&z, &vr)| vr * self.activation.apply(z))
                .sum();
            let weight = batch.weight(k);
            let resid = f - y;
            total += 0.5 * weight * resid * resid;
            for r in 0..p {
                let coeff = weight * resid * self.v[r] * self.activation.derivative(pre[r]);
                if coeff != 0.0 {
                    for (g, &xi) in grad[r * d..(r + 1) * d].iter_mut().zip(x) {
                        *g += coeff * xi;
                    }
                }
            }
        }
        if l2 > 0.0 {
            for (g, &w) in grad.iter_mut().zip(self.w.data()) {
                total += 0.5 * l2 * w * w;
                *g += l2 * w;
            }
        }
        let grads = Gradients { blocks: vec![grad] };
        if !total.is_finite() || !grads.is_finite() {
            return Err(Error::NonFinite { layer: 0 });
        }
        Ok((total, grads))
    }

    /// Only `W`; the output weights `v` stay fixed.
    fn parameters(&self) -> Vec<&[f64]> {
        vec![self.w.data()]
    }

    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.data_mut()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScheduleParams {
    /// Number of training samples `n`.
    pub num_samples: usize,
    /// Step-size constant: `eta = c2 * K / (n ||C||^2)`.
    pub c2: f64,
    /// Stopping-time constant: `T = ceil(c4 * ||C||^2 / lambda_min(Sigma))`.
    pub c4: f64,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            num_samples: 1,
            c2: 1.0,
            c4: 1.0,
            mc_samples: 20_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TheorySchedule {
    pub eta: f64,
    pub t_stop: usize,
    pub sigma_min: f64,
    /// `||C||^2` (squared spectral norm of the center matrix).
    pub centers_norm_sq: f64,
    /// Monte Carlo estimate of `Sigma`, symmetrized.
    pub sigma: Matrix,
}

/// Step size and stopping time for gradient descent on clusterable data.
///
/// `Sigma = (C C^T) .* E_g[phi'(C g) phi'(C g)^T]` with `g ~ N(0, I_d)` is
/// estimated by Monte Carlo; `sigma_min` is its smallest eigenvalue.
pub fn theory_schedule(
    centers: &Matrix,
    activation: Activation,
    params: &ScheduleParams,
) -> Result<TheorySchedule> {
    if params.mc_samples < 1000 {
        return Err(Error::InvalidArgument(format!(
            "at least 1000 Monte Carlo samples are required, got {}",
            params.mc_samples
        )));
    }
    if params.num_samples == 0 {
        return Err(Error::InvalidArgument(
            "number of samples must be positive".into(),
        ));
    }
    if centers.rows() == 0 {
        return Err(Error::Arity {
            what: "cluster centers",
            min: 1,
            actual: 0,
        });
    }
    for (i, c) in centers.iter_rows().enumerate() {
        let n = norm(c);
        if libm::fabs(n - 1.0) > 1e-6 {
            return Err(Error::Precondition(format!(
                "center {i} has norm {n}, expected unit norm"
            )));
        }
    }

    let (k, d) = (centers.rows(), centers.cols());
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut g = vec![0.0; d];
    let mut deriv = vec![0.0; k];
    let mut expect = Matrix::zeros(k, k);
    for _ in 0..params.mc_samples {
        for gi in g.iter_mut() {
            *gi = StandardNormal.sample(&mut rng);
        }
        for (a, c) in deriv.iter_mut().zip(centers.iter_rows()) {
            *a = activation.derivative(dot(c, &g));
        }
        for i in 0..k {
            let row = expect.row_mut(i);
            for j in 0..k {
                row[j] += deriv[i] * deriv[j];
            }
        }
    }
    let inv = 1.0 / params.mc_samples as f64;
    let gram = centers.gram();
    let sigma = Matrix::from_fn(k, k, |i, j| {
        let e_ij = 0.5 * (expect.get(i, j) + expect.get(j, i)) * inv;
        let g_ij = 0.5 * (gram.get(i, j) + gram.get(j, i));
        g_ij * e_ij
    });
    let sigma_min = min_symmetric_eigenvalue(&sigma);
    if sigma_min <= 1e-10 {
        return Err(Error::DegenerateCenters { sigma_min });
    }
    let spectral = centers.spectral_norm();
    let centers_norm_sq = spectral * spectral;
    let eta = params.c2 * k as f64 / (params.num_samples as f64 * centers_norm_sq);
    let t_stop = libm::ceil(params.c4 * centers_norm_sq / sigma_min).max(1.0) as usize;
    Ok(TheorySchedule {
        eta,
        t_stop,
        sigma_min,
        centers_norm_sq,
        sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_weights_are_balanced() {
        let net = TheoryNet::new(4, 3, 3, Activation::Tanh, 0).unwrap();
        assert_eq!(net.output_weights(), &[0.25, 0.25, -0.25, -0.25]);
        assert_eq!(net.label_values(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn rejects_relu_and_odd_width() {
        assert!(TheoryNet::new(4, 2, 2, Activation::Relu, 0).is_err());
        assert!(TheoryNet::new(3, 2, 2, Activation::Tanh, 0).is_err());
    }

    #[test]
    fn decodes_to_nearest_target() {
        let net = TheoryNet::new(2, 1, 3, Activation::Tanh, 0).unwrap();
        assert_eq!(net.decode(-0.8), 0);
        assert_eq!(net.decode(0.4), 1);
        assert_eq!(net.decode(0.6), 2);
        assert_eq!(net.decode(7.0), 2);
    }

    #[test]
    fn hand_derived_gradient_p2_d1() {
        // f = 1/2 tanh(w1 x) - 1/2 tanh(w2 x), L = 1/2 (y - f)^2
        // dL/dw1 = (f - y) * 1/2 * sech^2(w1 x) * x
        // dL/dw2 = (f - y) * (-1/2) * sech^2(w2 x) * x
        let (w1, w2, x) = (0.5, -0.3, 2.0);
        let w = Matrix::from_rows(&[[w1], [w2]]).unwrap();
        let net = TheoryNet::with_weights(w, 2, Activation::Tanh).unwrap();
        let y = 1.0; // class 1 of 2
        let t1 = libm::tanh(w1 * x);
        let t2 = libm::tanh(w2 * x);
        let f = 0.5 * t1 - 0.5 * t2;
        let expected = [
            (f - y) * 0.5 * (1.0 - t1 * t1) * x,
            (f - y) * -0.5 * (1.0 - t2 * t2) * x,
        ];
        let feats = Matrix::from_rows(&[[x]]).unwrap();
        let batch = Batch {
            features: &feats,
            rows: &[0],
            targets: &[1],
            weights: None,
        };
        let (loss, g) = net.loss_and_gradient(&batch, Loss::Squared, 0.0).unwrap();
        assert!((loss - 0.5 * (y - f) * (y - f)).abs() < 1e-15);
        assert!((g.blocks[0][0] - expected[0]).abs() < 1e-15);
        assert!((g.blocks[0][1] - expected[1]).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_is_rejected() {
        let net = TheoryNet::new(2, 1, 2, Activation::Tanh, 0).unwrap();
        let feats = Matrix::from_rows(&[[1.0]]).unwrap();
        let batch = Batch {
            features: &feats,
            rows: &[0],
            targets: &[0],
            weights: None,
        };
        assert!(net.loss_and_gradient(&batch, Loss::CrossEntropy, 0.0).is_err());
    }

    /// E[tanh'(g)^2] for g ~ N(0,1) by composite Simpson quadrature on [-12, 12].
    fn expected_tanh_prime_sq() -> f64 {
        let (a, b, n) = (-12.0_f64, 12.0_f64, 20_000usize);
        let h = (b - a) / n as f64;
        let f = |z: f64| {
            let s = 1.0 - libm::tanh(z) * libm::tanh(z);
            s * s * libm::exp(-0.5 * z * z) / libm::sqrt(2.0 * core::f64::consts::PI)
        };
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn orthonormal_centers_give_diagonal_sigma() {
        let k = 4;
        let centers = Matrix::from_fn(k, 6, |i, j| if i == j { 1.0 } else { 0.0 });
        let params = ScheduleParams {
            num_samples: 400,
            mc_samples: 20_000,
            seed: 7,
            ..Default::default()
        };
        let s = theory_schedule(&centers, Activation::Tanh, &params).unwrap();
        let oracle = expected_tanh_prime_sq();
        assert!((s.sigma_min - oracle).abs() < 0.01, "{} vs {oracle}", s.sigma_min);
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    assert_eq!(s.sigma.get(i, j), 0.0);
                }
            }
        }
        assert!((s.centers_norm_sq - 1.0).abs() < 1e-12);
        assert!((s.eta - k as f64 / 400.0).abs() < 1e-15);
        assert_eq!(s.t_stop, libm::ceil(1.0 / s.sigma_min) as usize);
    }

    #[test]
    fn duplicated_centers_are_degenerate() {
        let centers = Matrix::from_rows(&[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let params = ScheduleParams {
            num_samples: 10,
            mc_samples: 2000,
            ..Default::default()
        };
        assert!(matches!(
            theory_schedule(&centers, Activation::Tanh, &params),
            Err(Error::DegenerateCenters { .. })
        ));
    }

    #[test]
    fn scaled_centers_violate_unit_norm() {
        let centers = Matrix::from_rows(&[[2.0, 0.0], [0.0, 2.0]]).unwrap();
        let params = ScheduleParams {
            num_samples: 10,
            mc_samples: 2000,
            ..Default::default()
        };
        assert!(matches!(
            theory_schedule(&centers, Activation::Tanh, &params),
            Err(Error::Precondition(_))
        ));
        let few = ScheduleParams {
            mc_samples: 999,
            ..params
        };
        let unit = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert!(theory_schedule(&unit, Activation::Tanh, &few).is_err());
    }
}
