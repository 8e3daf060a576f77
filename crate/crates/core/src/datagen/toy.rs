use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Two-class toy problems in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ToyTask {
    /// Horizontal bands at `y = -1` (class 0) and `y = +1` (class 1) over
    /// `x in [-3, 3]`.
    Bands,
    /// Two interleaved half circles.
    Moons,
    /// Isotropic blobs at `(-2, 0)` and `(2, 0)`.
    Blobs,
}

impl ToyTask {
    /// Where the planted novel class lives for this task.
    fn ood_region(self) -> OodRegion {
        match self {
            ToyTask::Bands => OodRegion::Band { y: 3.0 },
            ToyTask::Moons => OodRegion::Blob {
                center: [2.0, 1.5],
                min_spread: 0.15,
            },
            ToyTask::Blobs => OodRegion::Blob {
                center: [0.0, 6.0],
                min_spread: 0.0,
            },
        }
    }
}

enum OodRegion {
    Band { y: f64 },
    Blob { center: [f64; 2], min_spread: f64 },
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn class_points<R: Rng>(task: ToyTask, class: usize, n: usize, noise: f64, rng: &mut R) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let base = match task {
                ToyTask::Blobs => {
                    if class == 0 {
                        [-2.0, 0.0]
                    } else {
                        [2.0, 0.0]
                    }
                }
                ToyTask::Bands => {
                    let x = rng.random_range(-3.0..=3.0);
                    [x, if class == 0 { -1.0 } else { 1.0 }]
                }
                ToyTask::Moons => {
                    let t = if n > 1 {
                        PI * i as f64 / (n - 1) as f64
                    } else {
                        0.0
                    };
                    if class == 0 {
                        [libm::cos(t), libm::sin(t)]
                    } else {
                        [1.0 - libm::cos(t), 0.5 - libm::sin(t)]
                    }
                }
            };
            [base[0] + noise * gauss(rng), base[1] + noise * gauss(rng)]
        })
        .collect()
}

fn check(n: usize, noise: f64) -> Result<()> {
    if n < 4 {
        return Err(Error::InvalidArgument("toy data sets need n >= 4".into()));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::InvalidArgument(
            "noise must be finite and non-negative".into(),
        ));
    }
    Ok(())
}

fn to_matrix(points: &[[f64; 2]]) -> Result<Matrix> {
    Matrix::new(points.len(), 2, points.iter().flatten().copied().collect())
}

/// `n` points, `n - n/2` of class 0 followed by `n/2` of class 1.
pub fn make_toy_2d(task: ToyTask, n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    check(n, noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n1 = n / 2;
    let n0 = n - n1;
    let mut pts = class_points(task, 0, n0, noise, &mut rng);
    pts.extend(class_points(task, 1, n1, noise, &mut rng));
    let labels = (0..n).map(|i| if i < n0 { 0 } else { 1 }).collect();
    Dataset::new(to_matrix(&pts)?, labels, 2)
}

/// A toy task plus a planted novel class (label 2).
#[derive(Debug, Clone, PartialEq)]
pub struct ToyWithOod {
    pub points: Dataset,
    /// 0 and 1 for the two known classes, 2 for the novel one.
    pub cluster_assignment: Vec<usize>,
    pub ood_cluster_flags: Vec<bool>,
}

/// [`make_toy_2d`] with `n_ood` extra points from a region no known class
/// covers: a third band above class 1 for bands, a blob beside the moons, and
/// a far blob for blobs.
pub fn make_toy_2d_with_ood(
    task: ToyTask,
    n_id: usize,
    n_ood: usize,
    noise: f64,
    seed: u64,
) -> Result<ToyWithOod> {
    let id = make_toy_2d(task, n_id, noise, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let ood: Vec<[f64; 2]> = (0..n_ood)
        .map(|_| match task.ood_region() {
            OodRegion::Band { y } => [
                rng.random_range(-3.0..=3.0) + noise * gauss(&mut rng),
                y + noise * gauss(&mut rng),
            ],
            OodRegion::Blob { center, min_spread } => {
                let s = noise.max(min_spread);
                [center[0] + s * gauss(&mut rng), center[1] + s * gauss(&mut rng)]
            }
        })
        .collect();
    let ood_set = Dataset::new(to_matrix(&ood)?, vec![2; n_ood], 3)?;
    let points = id.with_num_classes(3)?.concat(&ood_set)?;
    let cluster_assignment = points.labels().iter().map(|&l| l as usize).collect();
    Ok(ToyWithOod {
        points,
        cluster_assignment,
        ood_cluster_flags: vec![false, false, true],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_blobs_are_point_masses() {
        let d = make_toy_2d(ToyTask::Blobs, 10, 0.0, 1).unwrap();
        for (x, &l) in d.features().iter_rows().zip(d.labels()) {
            let expected = if l == 0 { [-2.0, 0.0] } else { [2.0, 0.0] };
            assert_eq!(x, expected);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        for task in [ToyTask::Bands, ToyTask::Moons, ToyTask::Blobs] {
            assert_eq!(
                make_toy_2d(task, 50, 0.1, 9).unwrap(),
                make_toy_2d(task, 50, 0.1, 9).unwrap()
            );
        }
    }

    #[test]
    fn moon_class_means_differ_in_both_coordinates() {
        let d = make_toy_2d(ToyTask::Moons, 1000, 0.1, 4).unwrap();
        let means = d.class_means();
        let (m0, m1) = (means[0].as_ref().unwrap(), means[1].as_ref().unwrap());
        // Noise-free means are (0, 2/pi) and (1, 1/2 - 2/pi).
        assert!((m0[0] - m1[0]).abs() > 0.5);
        assert!((m0[1] - m1[1]).abs() > 0.5);
    }

    #[test]
    fn rejects_tiny_n() {
        assert!(make_toy_2d(ToyTask::Bands, 3, 0.1, 0).is_err());
        assert!(make_toy_2d(ToyTask::Bands, 8, -1.0, 0).is_err());
    }

    #[test]
    fn planted_band_sits_above_class_one() {
        let t = make_toy_2d_with_ood(ToyTask::Bands, 100, 30, 0.0, 2).unwrap();
        assert_eq!(t.points.len(), 130);
        for (x, &l) in t.points.features().iter_rows().zip(t.points.labels()) {
            if l == 2 {
                assert_eq!(x[1], 3.0);
            }
        }
    }
}
