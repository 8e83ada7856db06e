use graddiag::diagnostics::{
    balanced_pool, estimate_snr, grad_variance_exact, parity_family, InputSpace, SnrAccumulator,
    TupleSampling,
};
use graddiag::engine::LossKind;
use graddiag::models::{lenet_scorer, parity_learner, ImageScale};
use graddiag::rng;
use proptest::prelude::*;
use rand::seq::SliceRandom;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn parity_variance_respects_bound(seed in any::<u64>(), d in 2usize..=7) {
        let net = parity_learner(d, seed).unwrap();
        let family = parity_family(d).unwrap();
        let rep = grad_variance_exact(&net, &InputSpace::Hypercube { d }, &family, LossKind::Square)
            .unwrap();
        prop_assert!(rep.measured_variance >= 0.0);
        prop_assert!(rep.within_bound());
        prop_assert_eq!(rep.family_size, 1 << d);
    }

    #[test]
    fn snr_report_is_consistent(
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 2..40),
    ) {
        let mut acc = SnrAccumulator::new(4, false);
        for r in &rows {
            acc.push(r);
        }
        let rep = acc.report(1);
        prop_assert!(rep.noise >= 0.0);
        prop_assert_eq!(rep.estimator_sample_count, rows.len());
        if rep.signal > 0.0 && rep.noise > 0.0 {
            let lr = rep.log_ratio.unwrap();
            prop_assert!((lr - (rep.signal / rep.noise).ln()).abs() < 1e-12);
        } else {
            prop_assert!(rep.log_ratio.is_none());
        }

        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..4).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let signal: f64 = mean.iter().map(|m| m * m).sum();
        let noise: f64 = rows
            .iter()
            .map(|r| r.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum::<f64>())
            .sum::<f64>()
            / n;
        prop_assert!((rep.signal - signal).abs() <= 1e-9 * signal.max(1.0));
        prop_assert!((rep.noise - noise).abs() <= 1e-9 * noise.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn exhaustive_snr_ignores_pool_order(seed in any::<u64>(), k in 1usize..=3) {
        let bottom = lenet_scorer(ImageScale::Small, rng::derive_seed(seed, 1)).unwrap();
        let top = parity_learner(k, rng::derive_seed(seed, 2)).unwrap();
        let mut r = rng::substream(seed, 3);
        let mut pool = balanced_pool(ImageScale::Small.image_size(), 8, &mut r).unwrap();
        let a = estimate_snr(&bottom, &top, &pool, TupleSampling::Exhaustive, 0, false).unwrap();
        pool.shuffle(&mut r);
        let b = estimate_snr(&bottom, &top, &pool, TupleSampling::Exhaustive, 9, false).unwrap();
        // Signals can be exactly zero for a balanced pool, so both moments
        // are compared on the scale of the noise.
        for (p, q) in [(&a.end_to_end, &b.end_to_end), (&a.decomposition, &b.decomposition)] {
            let scale = p.noise.max(q.noise);
            prop_assert!((p.noise - q.noise).abs() <= 1e-9 * scale);
            prop_assert!((p.signal - q.signal).abs() <= 1e-9 * (scale + p.signal.max(q.signal)));
        }
    }
}
