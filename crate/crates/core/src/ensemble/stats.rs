use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-9;

fn check_probability(p: &[f64]) -> Result<()> {
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument(
            "probability entries must be finite and non-negative".into(),
        ));
    }
    let sum: f64 = p.iter().sum();
    if libm::fabs(sum - 1.0) > SUM_TOL {
        return Err(Error::InvalidArgument(alloc::format!(
            "probability vector sums to {sum}"
        )));
    }
    Ok(())
}

fn check_outputs<P: AsRef<[f64]>>(outputs: &[P], min: usize, what: &'static str) -> Result<usize> {
    if outputs.len() < min {
        return Err(Error::Arity {
            what,
            min,
            actual: outputs.len(),
        });
    }
    let classes = outputs[0].as_ref().len();
    for o in outputs {
        let o = o.as_ref();
        if o.len() != classes {
            return Err(Error::Shape {
                context: "ensemble output length",
                expected: classes,
                actual: o.len(),
            });
        }
        check_probability(o)?;
    }
    Ok(classes)
}

/// Total variation distance `1/2 ||p - q||_1`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape {
            context: "probability vector length",
            expected: p.len(),
            actual: q.len(),
        });
    }
    check_probability(p)?;
    check_probability(q)?;
    Ok(tv_unchecked(p, q))
}

#[inline]
fn tv_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let half_l1 = 0.5 * p.iter().zip(q).map(|(a, b)| libm::fabs(a - b)).sum::<f64>();
    half_l1.min(1.0)
}

/// Average total variation distance over the `K (K - 1) / 2` unordered pairs
/// of member outputs.
pub fn disagreement_statistic<P: AsRef<[f64]>>(outputs: &[P]) -> Result<f64> {
    check_outputs(outputs, 2, "disagreement statistic")?;
    let k = outputs.len();
    let mut total = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            total += tv_unchecked(outputs[i].as_ref(), outputs[j].as_ref());
        }
    }
    let pairs = (k * (k - 1) / 2) as f64;
    Ok((total / pairs).clamp(0.0, 1.0))
}

/// Shannon entropy (nats) of the averaged output, with `0 log 0 = 0`.
pub fn entropy_avg_statistic<P: AsRef<[f64]>>(outputs: &[P]) -> Result<f64> {
    let classes = check_outputs(outputs, 1, "entropy of the average")?;
    let k = outputs.len() as f64;
    let mut entropy = 0.0;
    for c in 0..classes {
        let mean = outputs.iter().map(|o| o.as_ref()[c]).sum::<f64>() / k;
        if mean > 0.0 {
            entropy -= mean * libm::log(mean);
        }
    }
    Ok(entropy.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(tv_distance(&[0.5, 0.5], &[0.25, 0.75]).unwrap(), 0.25);
        assert!(matches!(
            tv_distance(&[1.0], &[0.5, 0.5]),
            Err(Error::Shape { .. })
        ));
        assert!(tv_distance(&[0.5, 0.6], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn disagreement_examples() {
        let same = vec![vec![0.2, 0.8]; 4];
        assert_eq!(disagreement_statistic(&same).unwrap(), 0.0);
        let pair = [[0.9, 0.1], [0.4, 0.6]];
        assert_eq!(
            disagreement_statistic(&pair).unwrap(),
            tv_distance(&pair[0], &pair[1]).unwrap()
        );
        let onehots = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(disagreement_statistic(&onehots).unwrap(), 1.0);
        assert!(matches!(
            disagreement_statistic(&[[1.0, 0.0]]),
            Err(Error::Arity { .. })
        ));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy_avg_statistic(&[[0.0, 1.0, 0.0]]).unwrap(), 0.0);
        let ln2 = core::f64::consts::LN_2;
        assert!((entropy_avg_statistic(&[[0.5, 0.5]; 3]).unwrap() - ln2).abs() < 1e-15);
        // disagreeing confident members look like one uncertain member
        let split = entropy_avg_statistic(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!((split - ln2).abs() < 1e-15);
    }
}
