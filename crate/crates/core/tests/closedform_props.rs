use graddiag::closedform::{
    build_parity_network, build_u, build_u_exact, build_w, build_w_exact, correlation_of,
    estimate_c, quadrant_correlation, svd, whiten, windows, WhiteningOp,
};
use graddiag::datagen::{gen_pwl, gen_pwl_slope_pm1, parity_label, random_bits};
use graddiag::engine::Tensor;
use graddiag::rng;
use nalgebra::{DMatrix, Matrix3};
use proptest::prelude::*;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

fn matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng::seeded(seed);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut r))
}

fn unit(d: usize, r: &mut rng::Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(r)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_and_agrees_with_nalgebra(
        rows in 1usize..12,
        cols in 1usize..12,
        seed in any::<u64>(),
    ) {
        let a = matrix(rows, cols, seed);
        let sp = svd(&a).unwrap();
        prop_assert!((sp.reconstruct() - &a).norm() <= 1e-8 * a.norm());
        prop_assert!(sp.s.iter().all(|s| *s >= 0.0));
        prop_assert!(sp.s.windows(2).all(|w| w[0] >= w[1]));

        let mut reference: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
        reference.sort_by(|x, y| y.total_cmp(x));
        prop_assert_eq!(reference.len(), sp.s.len());
        for (x, y) in reference.iter().zip(&sp.s) {
            prop_assert!((x - y).abs() <= 1e-10 * reference[0].max(1.0));
        }
    }

    #[test]
    fn w_and_u_entries(n in 1usize..40) {
        let (w, u) = (build_w(n), build_u(n));
        let (we, ue) = (build_w_exact(n), build_u_exact(n));
        for i in 0..n {
            for j in 0..n {
                let expect_w = (i as i64 - j as i64 + 1).max(0);
                prop_assert_eq!(we[i][j], expect_w);
                prop_assert_eq!(w[(i, j)], expect_w as f64);
                let expect_u = match i as i64 - j as i64 {
                    0 | 2 => 1,
                    1 => -2,
                    _ => 0,
                };
                prop_assert_eq!(ue[i][j], expect_u);
                prop_assert_eq!(u[(i, j)], expect_u as f64);
            }
        }
        prop_assert_eq!(&u * &w, DMatrix::<f64>::identity(n, n));
    }

    #[test]
    fn inverse_root_whitens(seed in any::<u64>()) {
        let m = Matrix3::from_fn(|i, j| {
            let mut r = rng::substream(seed, (3 * i + j) as u64);
            r.random_range(-1.0..1.0)
        });
        let c = m * m.transpose() + Matrix3::identity() * 0.05;
        let op = WhiteningOp::from_correlation(c).unwrap();
        let residual = op.c_inv_sqrt * c * op.c_inv_sqrt - Matrix3::identity();
        prop_assert!(residual.norm() <= 1e-6);
    }

    #[test]
    fn quadrant_correlation_shrinks_inner_product(seed in any::<u64>(), d in 2usize..20) {
        let mut r = rng::seeded(seed);
        let (w, v) = (unit(d, &mut r), unit(d, &mut r));
        let inner: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        let q = quadrant_correlation(&w, &v).unwrap();
        prop_assert!(q.abs() <= inner.abs() + 1e-12);
    }

    #[test]
    fn parity_network_on_random_inputs(seed in any::<u64>(), d in 1usize..=24) {
        let mut r = rng::seeded(seed);
        let v = random_bits(d, &mut r);
        let net = build_parity_network(d, &v).unwrap();
        let xs: Vec<Vec<u8>> = (0..200).map(|_| random_bits(d, &mut r)).collect();
        let data = xs.iter().flat_map(|x| x.iter().map(|&b| b as f64)).collect();
        let pred = net.predict(&Tensor::new(vec![xs.len(), d], data).unwrap()).unwrap();
        for (x, p) in xs.iter().zip(pred.data()) {
            prop_assert_eq!(*p, parity_label(x, &v) as f64);
        }
    }
}

#[test]
fn whitened_windows_have_identity_correlation() {
    for (n, seed) in [(25, 1), (50, 2), (100, 3)] {
        let fit: Vec<_> = (0..2000)
            .map(|i| gen_pwl_slope_pm1(n, 3, seed * 10_000 + i).unwrap())
            .collect();
        let op = estimate_c(&fit).unwrap();
        let fresh: Vec<[f64; 3]> = (0..2000)
            .map(|i| gen_pwl_slope_pm1(n, 3, seed * 10_000 + 5000 + i).unwrap())
            .flat_map(|c| windows(&c).collect::<Vec<_>>())
            .collect();
        let c_hat = correlation_of(&whiten(&fresh, &op)).unwrap();
        let gap = (c_hat - Matrix3::identity()).norm();
        assert!(gap <= 0.1, "n = {n}: |C_hat - I| = {gap}");
    }
}

#[test]
fn pwl_correlation_is_positive_definite() {
    let curves: Vec<_> = (0..500).map(|i| gen_pwl(40, 3, i).unwrap()).collect();
    let op = estimate_c(&curves).unwrap();
    assert_eq!(op.c, op.c.transpose());
    assert!(op.eigenvalues.iter().all(|l| *l > 0.0));
}
