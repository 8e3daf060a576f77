use erd_core::datagen::{make_ssnd_split, Dataset, SplitParams};
use erd_core::ensemble::{disagreement_statistic, entropy_avg_statistic, tv_distance};
use erd_core::linalg::Matrix;
use erd_core::metrics::{auroc_bruteforce, empirical_fpr, roc, threshold_for_fpr};
use erd_core::nn::{Activation, MlpClassifier};
use proptest::prelude::*;

fn simplex(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, m).prop_map(|raw| {
        let raw: Vec<f64> = raw.iter().map(|v| v + 1e-3).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|v| v / s).collect()
    })
}

fn outputs() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..6, 2usize..6).prop_flat_map(|(m, k)| prop::collection::vec(simplex(m), k))
}

fn scores(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![(0u8..8).prop_map(|v| v as f64 / 8.0), -2.0f64..2.0],
        1..max,
    )
}

proptest! {
    #[test]
    fn softmax_outputs_are_distributions(seed in any::<u64>(), x in prop::collection::vec(-5.0f64..5.0, 3)) {
        let model = MlpClassifier::new(&[3, 7, 4], Activation::Tanh, seed).unwrap();
        let p = model.forward(&x).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn tv_is_a_bounded_symmetric_distance(p in simplex(4), q in simplex(4)) {
        let d = tv_distance(&p, &q).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, tv_distance(&q, &p).unwrap());
        prop_assert!(tv_distance(&p, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn disagreement_is_bounded_and_order_free(mut outs in outputs()) {
        let t = disagreement_statistic(&outs).unwrap();
        prop_assert!((0.0..=1.0).contains(&t));
        outs.reverse();
        prop_assert!((disagreement_statistic(&outs).unwrap() - t).abs() < 1e-12);
        outs.rotate_left(1);
        prop_assert!((disagreement_statistic(&outs).unwrap() - t).abs() < 1e-12);
    }

    #[test]
    fn entropy_is_at_most_log_classes(outs in outputs()) {
        let m = outs[0].len() as f64;
        let h = entropy_avg_statistic(&outs).unwrap();
        prop_assert!(h >= -1e-12 && h <= m.ln() + 1e-12);
    }

    #[test]
    fn fast_auroc_matches_pair_counting(id in scores(60), ood in scores(60)) {
        let report = roc(&id, &ood).unwrap();
        prop_assert!((report.auroc - auroc_bruteforce(&id, &ood).unwrap()).abs() < 1e-12);
        prop_assert_eq!(report.fpr.first().copied(), Some(0.0));
        prop_assert_eq!(report.tpr.last().copied(), Some(1.0));
        prop_assert!(report.fpr.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(report.tpr.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn auroc_ignores_strictly_increasing_transforms(id in scores(40), ood in scores(40)) {
        let f = |s: &[f64]| s.iter().map(|v| (3.0 * v).exp() + 7.0).collect::<Vec<_>>();
        let a = roc(&id, &ood).unwrap().auroc;
        let b = roc(&f(&id), &f(&ood)).unwrap().auroc;
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn swapping_classes_mirrors_auroc(id in scores(40), ood in scores(40)) {
        let a = roc(&id, &ood).unwrap().auroc;
        let b = roc(&ood, &id).unwrap().auroc;
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn calibrated_threshold_respects_the_target(
        s in prop::collection::vec(prop_oneof![(0u8..20).prop_map(|v| v as f64), 0.0f64..20.0], 20..200),
        target in 0.001f64..0.5,
    ) {
        let t = threshold_for_fpr(&s, target).unwrap();
        prop_assert!(empirical_fpr(&s, t) <= target);
        // any smaller observed score would overshoot
        if let Some(lower) = s.iter().copied().filter(|&v| v < t).reduce(f64::max) {
            prop_assert!(empirical_fpr(&s, lower) > target);
        }
    }

    #[test]
    fn split_parts_are_disjoint_and_sized(
        seed in any::<u64>(),
        ratio in 0.0f64..=0.5,
        u in 10usize..80,
    ) {
        // 4 ID clusters of 100 and 2 OOD clusters of 100
        let n = 600;
        let cluster: Vec<usize> = (0..n).map(|i| i / 100).collect();
        let flags = [false, false, false, false, true, true];
        let features = Matrix::from_fn(n, 2, |i, j| (i * 2 + j) as f64);
        let labels = cluster.iter().map(|&c| if c < 4 { (c % 2) as i64 } else { 2 }).collect();
        let points = Dataset::new(features, labels, 3).unwrap();
        let params = SplitParams {
            train_fraction: 0.3,
            val_fraction: 0.1,
            unlabeled_id_fraction: 0.5,
            ood_ratio: ratio,
            unlabeled_size: u,
            seed,
        };
        let b = make_ssnd_split(&points, &cluster, &flags, &params).unwrap();
        prop_assert!(b.indices.is_disjoint(n));
        prop_assert_eq!(b.unlabeled.len(), u);
        prop_assert_eq!(b.unlabeled_truth.iter().filter(|&&t| t).count(), (ratio * u as f64).round() as usize);
        prop_assert_eq!(b.test.len(), b.unlabeled.len());
        for &i in b.indices.train.iter().chain(&b.indices.validation) {
            prop_assert!(!flags[cluster[i]]);
        }
        for (&i, &t) in b.indices.unlabeled.iter().zip(&b.unlabeled_truth) {
            prop_assert_eq!(flags[cluster[i]], t);
        }
        prop_assert!(b.unlabeled.labels().iter().all(|&l| l == -1));
    }
}
