//! ROC analysis for detectors where OOD is the positive class and a point is
//! flagged when its score is strictly above the threshold.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Minimum number of validation scores accepted by [`threshold_for_fpr`].
pub const MIN_CALIBRATION_SCORES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RocReport {
    /// Descending: `+inf`, every distinct score, `-inf`.
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub auroc: f64,
    /// `1 - fpr` at the first curve point whose TPR reaches 0.95 (no
    /// interpolation).
    pub tnr_at_tpr95: f64,
}

fn check_scores(scores_id: &[f64], scores_ood: &[f64]) -> Result<()> {
    for (what, s) in [("ID scores", scores_id), ("OOD scores", scores_ood)] {
        if s.is_empty() {
            return Err(Error::Arity {
                what,
                min: 1,
                actual: 0,
            });
        }
        if s.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("scores must not be NaN".into()));
        }
    }
    Ok(())
}

/// ROC curve over all distinct score thresholds, with equal scores grouped
/// into one step.
pub fn roc(scores_id: &[f64], scores_ood: &[f64]) -> Result<RocReport> {
    check_scores(scores_id, scores_ood)?;
    // (score, is_ood) sorted by descending score
    let mut all: Vec<(f64, bool)> = scores_id
        .iter()
        .map(|&s| (s, false))
        .chain(scores_ood.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (n_id, n_ood) = (scores_id.len() as u64, scores_ood.len() as u64);
    let mut thresholds = alloc::vec![f64::INFINITY];
    let mut tp_counts = alloc::vec![0u64];
    let mut fp_counts = alloc::vec![0u64];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < all.len() {
        let s = all[i].0;
        // Flagging is `score > s`, so the current group is not yet counted.
        thresholds.push(s);
        tp_counts.push(tp);
        fp_counts.push(fp);
        while i < all.len() && all[i].0 == s {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
    }
    thresholds.push(f64::NEG_INFINITY);
    tp_counts.push(tp);
    fp_counts.push(fp);

    let mut twice_area: u128 = 0;
    for k in 1..tp_counts.len() {
        let dfp = (fp_counts[k] - fp_counts[k - 1]) as u128;
        twice_area += dfp * (tp_counts[k] + tp_counts[k - 1]) as u128;
    }
    let auroc = twice_area as f64 / (2 * n_id as u128 * n_ood as u128) as f64;

    let k95 = tp_counts
        .iter()
        .position(|&t| 100 * t >= 95 * n_ood)
        .expect("the final point has TPR 1");
    let tnr_at_tpr95 = 1.0 - fp_counts[k95] as f64 / n_id as f64;

    Ok(RocReport {
        thresholds,
        tpr: tp_counts.iter().map(|&t| t as f64 / n_ood as f64).collect(),
        fpr: fp_counts.iter().map(|&f| f as f64 / n_id as f64).collect(),
        auroc,
        tnr_at_tpr95,
    })
}

/// Pairwise Mann-Whitney count: `(wins + ties / 2) / (n_id n_ood)`.
pub fn auroc_bruteforce(scores_id: &[f64], scores_ood: &[f64]) -> Result<f64> {
    check_scores(scores_id, scores_ood)?;
    let mut twice_wins: u128 = 0;
    for &o in scores_ood {
        for &i in scores_id {
            if o > i {
                twice_wins += 2;
            } else if o == i {
                twice_wins += 1;
            }
        }
    }
    Ok(twice_wins as f64 / (2 * scores_id.len() as u128 * scores_ood.len() as u128) as f64)
}

/// Fraction of `scores` strictly above `threshold`.
pub fn empirical_fpr(scores: &[f64], threshold: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().filter(|&&s| s > threshold).count() as f64 / scores.len() as f64
}

/// Smallest validation score `t` such that at most a `target_fpr` fraction
/// of the validation scores lies strictly above `t`.
pub fn threshold_for_fpr(validation_id_scores: &[f64], target_fpr: f64) -> Result<f64> {
    let n = validation_id_scores.len();
    if n < MIN_CALIBRATION_SCORES {
        return Err(Error::InsufficientSamples {
            what: "threshold calibration scores",
            needed: MIN_CALIBRATION_SCORES,
            available: n,
        });
    }
    if !(target_fpr > 0.0 && target_fpr < 1.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "target FPR must lie in (0, 1), got {target_fpr}"
        )));
    }
    if validation_id_scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("scores must not be NaN".into()));
    }
    let mut sorted = validation_id_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    // largest k with k / n <= target
    let mut allowed = libm::floor(target_fpr * n as f64) as usize;
    while allowed + 1 < n && (allowed + 1) as f64 / n as f64 <= target_fpr {
        allowed += 1;
    }
    while allowed > 0 && allowed as f64 / n as f64 > target_fpr {
        allowed -= 1;
    }
    Ok(sorted[n - 1 - allowed])
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn perfect_separation() {
        let r = roc(&[0.1, 0.2], &[0.8, 0.9]).unwrap();
        assert_eq!(r.auroc, 1.0);
        assert_eq!(r.tnr_at_tpr95, 1.0);
        assert_eq!(auroc_bruteforce(&[0.1, 0.2], &[0.8, 0.9]).unwrap(), 1.0);
    }

    #[test]
    fn all_ties_is_chance() {
        let r = roc(&[0.3; 5], &[0.3; 7]).unwrap();
        assert_eq!(r.auroc, 0.5);
        assert_eq!(auroc_bruteforce(&[0.3; 5], &[0.3; 7]).unwrap(), 0.5);
        // the only point reaching TPR 0.95 flags everything
        assert_eq!(r.tnr_at_tpr95, 0.0);
    }

    #[test]
    fn hand_counted_example() {
        // 0.8 beats all three ID scores, 0.3 beats only 0.1: 4 of 6 pairs
        let id = [0.1, 0.4, 0.35];
        let ood = [0.8, 0.3];
        assert!((roc(&id, &ood).unwrap().auroc - 4.0 / 6.0).abs() < 1e-15);
        assert!((auroc_bruteforce(&id, &ood).unwrap() - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn curve_runs_from_origin_to_one_one() {
        let r = roc(&[0.5, 0.1, 0.4], &[0.45, 0.9]).unwrap();
        assert_eq!((r.fpr[0], r.tpr[0]), (0.0, 0.0));
        assert_eq!((*r.fpr.last().unwrap(), *r.tpr.last().unwrap()), (1.0, 1.0));
        assert!(r.fpr.windows(2).all(|w| w[0] <= w[1]));
        assert!(r.tpr.windows(2).all(|w| w[0] <= w[1]));
        assert!(r.thresholds.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(matches!(roc(&[], &[1.0]), Err(Error::Arity { .. })));
        assert!(auroc_bruteforce(&[1.0], &[]).is_err());
    }

    #[test]
    fn threshold_flags_exact_top_half() {
        let scores: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        let t = threshold_for_fpr(&scores, 0.5).unwrap();
        assert_eq!(t, 0.5);
        assert_eq!(scores.iter().filter(|&&s| s > t).count(), 50);
    }

    #[test]
    fn tiny_target_goes_to_max() {
        let scores: Vec<f64> = (0..50).map(|i| (i * 7 % 13) as f64).collect();
        let t = threshold_for_fpr(&scores, 1e-9).unwrap();
        assert!(t >= 12.0);
    }

    #[test]
    fn constant_scores_are_never_flagged() {
        let scores = vec![0.25; 30];
        for target in [0.01, 0.3, 0.99] {
            let t = threshold_for_fpr(&scores, target).unwrap();
            assert_eq!(t, 0.25);
            assert_eq!(empirical_fpr(&scores, t), 0.0);
        }
    }

    #[test]
    fn calibration_argument_checks() {
        assert!(threshold_for_fpr(&[0.0; 19], 0.1).is_err());
        assert!(threshold_for_fpr(&[0.0; 20], 0.0).is_err());
        assert!(threshold_for_fpr(&[0.0; 20], 1.0).is_err());
    }
}
