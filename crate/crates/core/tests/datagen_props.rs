use std::f64::consts::PI;

use graddiag::closedform::build_w;
use graddiag::datagen::{
    gen_parity, gen_pwl, gen_pwl_slope_pm1, gen_step_task, gen_stock_sample, gen_tuple,
    parity_label, rasterize, StockTask,
};
use graddiag::rng;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn same_seed_same_output(seed in any::<u64>(), d in 1usize..20, k in 1usize..5) {
        let v: Vec<u8> = (0..d).map(|i| (i % 2) as u8).collect();
        prop_assert_eq!(gen_parity(d, &v, 5, seed).unwrap(), gen_parity(d, &v, 5, seed).unwrap());
        prop_assert_eq!(gen_tuple(k, seed).unwrap(), gen_tuple(k, seed).unwrap());
        prop_assert_eq!(gen_pwl(30, 3, seed).unwrap(), gen_pwl(30, 3, seed).unwrap());
        prop_assert_eq!(gen_stock_sample(d, k, seed).unwrap(), gen_stock_sample(d, k, seed).unwrap());
    }

    #[test]
    fn parity_labels_follow_hidden_vector(seed in any::<u64>(), d in 1usize..40) {
        let mut r = rng::seeded(seed);
        let v = graddiag::datagen::random_bits(d, &mut r);
        for s in gen_parity(d, &v, 20, seed).unwrap() {
            prop_assert_eq!(s.y, parity_label(&s.x, &v));
            let ones = s.x.iter().zip(&v).filter(|(a, b)| **a == 1 && **b == 1).count();
            prop_assert_eq!(s.y, if ones % 2 == 0 { 1 } else { -1 });
        }
    }

    #[test]
    fn tuple_label_is_product(seed in any::<u64>(), k in 1usize..6) {
        let t = gen_tuple(k, seed).unwrap();
        prop_assert_eq!(t.y_parts.len(), k);
        prop_assert_eq!(t.y_tilde, t.y_parts.iter().product::<i8>());
        for im in &t.images {
            prop_assert_eq!(im.y == 1, im.theta < PI / 2.0);
        }
    }

    #[test]
    fn inside_lines_cover_their_length(
        theta in 0.0f64..PI,
        length in 5.0f64..23.0,
    ) {
        let size = 28;
        let center = (14, 14);
        let img = rasterize(size, theta, length, center);
        prop_assert!(img.pixel_count() as f64 >= length - 2.0);
    }

    #[test]
    fn pwl_matches_w_times_p(seed in any::<u64>(), n in 5usize..60, k in 1usize..5) {
        let k = k.min(n);
        let c = gen_pwl(n, k, seed).unwrap();
        prop_assert_eq!(c.p.iter().filter(|v| **v != 0.0).count(), k);
        for (&t, &a) in c.theta.iter().zip(&c.a) {
            prop_assert_eq!(c.p[t], a);
        }
        let w = build_w(n);
        for i in 0..n {
            let wp: f64 = (0..n).map(|j| w[(i, j)] * c.p[j]).sum();
            prop_assert!((wp - c.f[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn slope_pm1_curves_have_unit_slopes(seed in any::<u64>(), n in 10usize..80, k in 1usize..5) {
        let c = gen_pwl_slope_pm1(n, k, seed).unwrap();
        let mut prev = c.b;
        for &f in &c.f {
            prop_assert!(((f - prev).abs() - 1.0).abs() < 1e-12);
            prev = f;
        }
    }

    #[test]
    fn step_labels_are_levels(seed in any::<u64>(), d in 1usize..12) {
        let z: Vec<f64> = (0..8).map(|i| i as f64 * 0.5 - 1.0).collect();
        let task = gen_step_task(d, &z, 50, seed).unwrap();
        for (_, y) in &task.samples {
            prop_assert!(z.contains(y));
        }
    }

    #[test]
    fn stock_payoff_is_one_at_label(seed in any::<u64>(), d in 1usize..30, k in 1usize..40) {
        let s = gen_stock_sample(d, k, seed).unwrap();
        prop_assert_eq!(s.z[s.y], 1.0);
        prop_assert!(s.z.iter().all(|v| *v == 1.0 || *v == -1.0));
    }
}

#[test]
fn other_stock_payoffs_are_centered() {
    let task = StockTask::new(5, 4, 3).unwrap();
    let mut r = rng::seeded(4);
    let (mut sum, mut count) = (0.0, 0usize);
    for _ in 0..10_000 {
        let s = task.sample(&mut r);
        for (i, z) in s.z.iter().enumerate() {
            if i != s.y {
                sum += z;
                count += 1;
            }
        }
    }
    let mean = sum / count as f64;
    assert!(mean.abs() <= 0.05, "mean {mean}");
}
