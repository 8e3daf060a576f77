use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{euclidean_distance, norm, Matrix};

const UNIT_NORM_TOL: f64 = 1e-6;
const GEOMETRY_TOL: f64 = 1e-9;

/// Generative description of an (epsilon, rho)-clusterable data set.
///
/// Clusters flagged in `ood_cluster_flags` hold novel-class points that never
/// appear in the labeled splits. The labels of the remaining (ID) clusters
/// must be exactly `0..m`, and OOD clusters must use labels outside that set.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClusterableSpec {
    /// Unit-norm cluster centers, one per row.
    pub centers: Matrix,
    pub cluster_labels: Vec<usize>,
    pub epsilon: f64,
    pub rho: f64,
    pub sizes: Vec<usize>,
    pub ood_cluster_flags: Vec<bool>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub seed: u64,
}

/// A realized clusterable data set.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterableData {
    /// Points with their (possibly noisy) labels.
    pub points: Dataset,
    pub cluster_assignment: Vec<usize>,
    /// `true` where the label differs from the cluster label.
    pub noisy: Vec<bool>,
}

impl ClusterableSpec {
    pub fn num_clusters(&self) -> usize {
        self.centers.rows()
    }

    pub fn total_points(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Number of in-distribution classes `m` (labels `0..m`).
    pub fn num_id_classes(&self) -> usize {
        self.id_labels().len()
    }

    fn id_labels(&self) -> Vec<usize> {
        let mut labels: Vec<usize> = self
            .cluster_labels
            .iter()
            .zip(&self.ood_cluster_flags)
            .filter(|(_, &ood)| !ood)
            .map(|(&l, _)| l)
            .collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    /// Number of label noise flips in a cluster of `size` points.
    pub fn noisy_count(&self, size: usize) -> usize {
        libm::floor(self.rho * size as f64 + 1e-9) as usize
    }

    /// Checks every clause and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut violations: Vec<String> = Vec::new();
        let k = self.num_clusters();
        if k == 0 {
            violations.push("at least one cluster is required".into());
        }
        for (name, len) in [
            ("cluster_labels", self.cluster_labels.len()),
            ("sizes", self.sizes.len()),
            ("ood_cluster_flags", self.ood_cluster_flags.len()),
        ] {
            if len != k {
                violations.push(format!("{name} has {len} entries for {k} clusters"));
            }
        }
        if !violations.is_empty() {
            return Err(Error::InvalidSpec(violations.join("; ")));
        }
        for (i, c) in self.centers.iter_rows().enumerate() {
            let n = norm(c);
            if libm::fabs(n - 1.0) > UNIT_NORM_TOL {
                violations.push(format!("center {i} has norm {n}, not 1"));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            violations.push(format!("epsilon {} must be >= 0", self.epsilon));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            violations.push(format!("rho {} outside [0, 1]", self.rho));
        }
        if !(self.alpha1 > 0.0 && self.alpha2 >= self.alpha1) {
            violations.push(format!(
                "need 0 < alpha1 <= alpha2, got {} and {}",
                self.alpha1, self.alpha2
            ));
        }
        for i in 0..k {
            for j in i + 1..k {
                if self.cluster_labels[i] == self.cluster_labels[j] {
                    continue;
                }
                let dist = euclidean_distance(self.centers.row(i), self.centers.row(j));
                if dist < 2.0 * self.epsilon - GEOMETRY_TOL {
                    violations.push(format!(
                        "centers {i} and {j} have different labels but are {dist} apart (< 2 epsilon = {})",
                        2.0 * self.epsilon
                    ));
                }
            }
        }
        let n = self.total_points() as f64;
        let (lo, hi) = (self.alpha1 * n / k as f64, self.alpha2 * n / k as f64);
        for (i, &s) in self.sizes.iter().enumerate() {
            if s == 0 {
                violations.push(format!("cluster {i} is empty"));
            } else if (s as f64) < lo - GEOMETRY_TOL || (s as f64) > hi + GEOMETRY_TOL {
                violations.push(format!(
                    "cluster {i} has {s} points, outside balance range [{lo}, {hi}]"
                ));
            }
        }
        let id = self.id_labels();
        if id.is_empty() {
            violations.push("no in-distribution clusters".into());
        } else if id.iter().enumerate().any(|(i, &l)| i != l) {
            violations.push(format!(
                "in-distribution labels must be 0..{}, got {id:?}",
                id.len()
            ));
        }
        for (i, (&l, &ood)) in self
            .cluster_labels
            .iter()
            .zip(&self.ood_cluster_flags)
            .enumerate()
        {
            if ood && l < id.len() {
                violations.push(format!("OOD cluster {i} reuses in-distribution label {l}"));
            }
        }
        let needs_noise = self
            .sizes
            .iter()
            .zip(&self.ood_cluster_flags)
            .any(|(&s, &ood)| !ood && self.noisy_count(s) > 0);
        if needs_noise && id.len() < 2 {
            violations.push("label noise needs at least two in-distribution classes".into());
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(violations.join("; ")))
        }
    }
}

/// Geometry of a clusterable data set with the OOD clusters last.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClusterLayout {
    pub num_clusters: usize,
    pub num_ood_clusters: usize,
    /// In-distribution classes `m`.
    pub num_classes: usize,
    pub dim: usize,
    pub epsilon: f64,
    pub rho: f64,
    pub total_points: usize,
}

impl ClusterLayout {
    /// Spec with random unit centers. ID cluster `i` gets label `i mod m`
    /// and every OOD cluster gets label `m`. Points are spread as evenly as
    /// possible, and `alpha1`, `alpha2` are the tightest admissible values.
    pub fn spec(&self, centers_seed: u64, seed: u64) -> Result<ClusterableSpec> {
        let k = self.num_clusters;
        if k == 0 || self.num_ood_clusters >= k || k - self.num_ood_clusters < self.num_classes {
            return Err(Error::InvalidArgument(format!(
                "{k} clusters with {} OOD cannot cover {} classes",
                self.num_ood_clusters, self.num_classes
            )));
        }
        if self.total_points < k {
            return Err(Error::InsufficientSamples {
                what: "clusterable points",
                needed: k,
                available: self.total_points,
            });
        }
        let id_clusters = k - self.num_ood_clusters;
        let base = self.total_points / k;
        let extra = self.total_points % k;
        let mean = self.total_points as f64 / k as f64;
        Ok(ClusterableSpec {
            centers: random_unit_centers(k, self.dim, centers_seed),
            cluster_labels: (0..k)
                .map(|i| {
                    if i < id_clusters {
                        i % self.num_classes
                    } else {
                        self.num_classes
                    }
                })
                .collect(),
            epsilon: self.epsilon,
            rho: self.rho,
            sizes: (0..k).map(|i| base + (i < extra) as usize).collect(),
            ood_cluster_flags: (0..k).map(|i| i >= id_clusters).collect(),
            alpha1: base as f64 / mean,
            alpha2: (base + (extra > 0) as usize) as f64 / mean,
            seed,
        })
    }
}

/// `k` random unit vectors in `R^d`.
pub fn random_unit_centers(k: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(k * d);
    for _ in 0..k {
        data.extend(unit_vector(d, &mut rng));
    }
    Matrix::new(k, d, data).expect("unit vectors are finite")
}

fn unit_vector<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Samples each point as `c_i + r u` with `u` uniform on the unit sphere and
/// `r` uniform on `[0, epsilon]`. In every in-distribution cluster exactly
/// `floor(rho |C_i|)` points receive a wrong label drawn uniformly from the
/// other in-distribution classes. OOD clusters keep their label.
pub fn generate_clusterable(spec: &ClusterableSpec) -> Result<ClusterableData> {
    spec.validate()?;
    let d = spec.centers.cols();
    let n = spec.total_points();
    let m = spec.num_id_classes();
    let num_classes = spec.cluster_labels.iter().copied().max().unwrap_or(0) + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut assignment = Vec::with_capacity(n);
    let mut noisy = Vec::with_capacity(n);
    for (i, center) in spec.centers.iter_rows().enumerate() {
        let size = spec.sizes[i];
        let label = spec.cluster_labels[i];
        let flips: Vec<usize> = if spec.ood_cluster_flags[i] {
            Vec::new()
        } else {
            let mut f = index::sample(&mut rng, size, spec.noisy_count(size)).into_vec();
            f.sort_unstable();
            f
        };
        let start = labels.len();
        for _ in 0..size {
            let u = unit_vector(d, &mut rng);
            let r = spec.epsilon * rng.random::<f64>();
            data.extend(center.iter().zip(&u).map(|(c, ui)| c + r * ui));
            labels.push(label as i64);
            assignment.push(i);
            noisy.push(false);
        }
        for f in flips {
            // uniform over the m - 1 wrong in-distribution labels
            let mut wrong = rng.random_range(0..m - 1);
            if wrong >= label {
                wrong += 1;
            }
            labels[start + f] = wrong as i64;
            noisy[start + f] = true;
        }
    }
    let points = Dataset::new(Matrix::new(n, d, data)?, labels, num_classes)?;
    Ok(ClusterableData {
        points,
        cluster_assignment: assignment,
        noisy,
    })
}

/// Re-checks a realization against every clause of its spec: the epsilon
/// radius, center separation, per-cluster noise fraction and balance.
pub fn validate_clusterable(data: &ClusterableData, spec: &ClusterableSpec) -> Result<()> {
    spec.validate()?;
    let k = spec.num_clusters();
    let n = data.points.len();
    if data.cluster_assignment.len() != n {
        return Err(Error::Shape {
            context: "cluster assignment",
            expected: n,
            actual: data.cluster_assignment.len(),
        });
    }
    let mut violations: Vec<String> = Vec::new();
    let mut sizes = vec![0usize; k];
    let mut wrong = vec![0usize; k];
    for (idx, (x, &c)) in data
        .points
        .features()
        .iter_rows()
        .zip(&data.cluster_assignment)
        .enumerate()
    {
        if c >= k {
            violations.push(format!("point {idx} assigned to unknown cluster {c}"));
            continue;
        }
        sizes[c] += 1;
        let dist = euclidean_distance(x, spec.centers.row(c));
        if dist > spec.epsilon + GEOMETRY_TOL {
            violations.push(format!(
                "point {idx} is {dist} from its center (epsilon = {})",
                spec.epsilon
            ));
        }
        if data.points.labels()[idx] != spec.cluster_labels[c] as i64 {
            wrong[c] += 1;
        }
    }
    let total = n as f64;
    for i in 0..k {
        if sizes[i] == 0 {
            violations.push(format!("cluster {i} is empty"));
            continue;
        }
        let frac = wrong[i] as f64 / sizes[i] as f64;
        if frac > spec.rho + 1e-12 {
            violations.push(format!(
                "cluster {i} has noise fraction {frac} > rho = {}",
                spec.rho
            ));
        }
        let (lo, hi) = (spec.alpha1 * total / k as f64, spec.alpha2 * total / k as f64);
        let s = sizes[i] as f64;
        if s < lo - GEOMETRY_TOL || s > hi + GEOMETRY_TOL {
            violations.push(format!(
                "cluster {i} has {} points, outside [{lo}, {hi}]",
                sizes[i]
            ));
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidSpec(violations.join("; ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn spec(epsilon: f64, rho: f64) -> ClusterableSpec {
        ClusterableSpec {
            centers: random_unit_centers(4, 5, 11),
            cluster_labels: vec![0, 1, 0, 2],
            epsilon,
            rho,
            sizes: vec![40, 40, 40, 40],
            ood_cluster_flags: vec![false, false, false, true],
            alpha1: 1.0,
            alpha2: 1.0,
            seed: 5,
        }
    }

    #[test]
    fn zero_radius_puts_points_on_centers() {
        let s = spec(0.0, 0.1);
        let data = generate_clusterable(&s).unwrap();
        for (x, &c) in data.points.features().iter_rows().zip(&data.cluster_assignment) {
            assert_eq!(x, s.centers.row(c));
        }
    }

    #[test]
    fn zero_noise_keeps_cluster_labels() {
        let s = spec(0.1, 0.0);
        let data = generate_clusterable(&s).unwrap();
        for (&l, &c) in data.points.labels().iter().zip(&data.cluster_assignment) {
            assert_eq!(l, s.cluster_labels[c] as i64);
        }
        assert!(data.noisy.iter().all(|&n| !n));
    }

    #[test]
    fn noise_count_is_exact_and_uses_id_labels() {
        let s = spec(0.1, 0.1);
        let data = generate_clusterable(&s).unwrap();
        validate_clusterable(&data, &s).unwrap();
        for cluster in 0..4 {
            let flips = data
                .cluster_assignment
                .iter()
                .zip(&data.noisy)
                .filter(|(&c, &n)| c == cluster && n)
                .count();
            let expected = if s.ood_cluster_flags[cluster] { 0 } else { 4 };
            assert_eq!(flips, expected);
        }
        assert!(data.points.labels().iter().all(|&l| l <= 2));
        assert!(data
            .points
            .labels()
            .iter()
            .zip(&data.noisy)
            .filter(|(_, &n)| n)
            .all(|(&l, _)| l < 2));
    }

    #[test]
    fn separation_only_binds_differently_labeled_centers() {
        let close = Matrix::from_rows(&[[1.0, 0.0], [libm::cos(0.1), libm::sin(0.1)]]).unwrap();
        let dist = euclidean_distance(close.row(0), close.row(1));
        let mut s = ClusterableSpec {
            centers: close,
            cluster_labels: vec![0, 0],
            epsilon: dist,
            rho: 0.0,
            sizes: vec![5, 5],
            ood_cluster_flags: vec![false, false],
            alpha1: 1.0,
            alpha2: 1.0,
            seed: 0,
        };
        assert!(s.validate().is_ok());
        s.cluster_labels = vec![0, 1];
        let err = s.validate().unwrap_err();
        assert!(
            matches!(err, Error::InvalidSpec(ref m) if m.contains("2 epsilon")),
            "{err}"
        );
    }

    #[test]
    fn imbalance_and_bad_labels_are_reported() {
        let mut s = spec(0.1, 0.0);
        s.sizes = vec![40, 40, 40, 80];
        assert!(s.validate().is_err());
        let mut s = spec(0.1, 0.0);
        s.cluster_labels = vec![0, 2, 0, 3];
        assert!(s.validate().is_err());
        let mut s = spec(0.1, 0.0);
        s.cluster_labels = vec![0, 1, 0, 1];
        let msg = s.validate().unwrap_err().to_string();
        assert!(msg.contains("OOD cluster 3"), "{msg}");
    }

    #[test]
    fn generation_is_a_function_of_the_seed() {
        let s = spec(0.2, 0.1);
        assert_eq!(
            generate_clusterable(&s).unwrap(),
            generate_clusterable(&s).unwrap()
        );
        let mut t = s.clone();
        t.seed += 1;
        assert_ne!(
            generate_clusterable(&s).unwrap(),
            generate_clusterable(&t).unwrap()
        );
    }
}
