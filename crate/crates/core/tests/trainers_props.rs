use graddiag::datagen::{gen_parity, parity_tensors, random_bits};
use graddiag::engine::{LossKind, Tensor};
use graddiag::experiments::{run_pwl, PwlSpec, PwlVariant};
use graddiag::models::parity_learner;
use graddiag::rng;
use graddiag::trainers::{
    forward_only_schedule, project_onto_ball, train_forward_only, train_sgd, Link, TrainConfig,
};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn unit(d: usize, r: &mut rng::Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(r)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Inputs on the unit sphere labelled by `link(v* . x)`.
fn sphere_task(link: &Link, v_star: &[f64], count: usize, r: &mut rng::Rng) -> (Tensor, Vec<f64>) {
    let xs: Vec<Vec<f64>> = (0..count).map(|_| unit(v_star.len(), r)).collect();
    let ys = xs
        .iter()
        .map(|x| link.value(x.iter().zip(v_star).map(|(a, b)| a * b).sum()))
        .collect();
    (Tensor::from_rows(&xs).unwrap(), ys)
}

struct Outcome {
    error: f64,
    large: usize,
    allowance: f64,
}

fn forward_only_run(
    link: Link,
    d: usize,
    b: f64,
    iterations: usize,
    eta: f64,
    seed: u64,
) -> Outcome {
    let mut r = rng::substream(seed, 0);
    let v_star: Vec<f64> = unit(d, &mut r).into_iter().map(|x| x * b).collect();
    let (ex, ey) = sphere_task(&link, &v_star, 2000, &mut rng::substream(seed, 1));
    let mut train_rng = rng::substream(seed, 2);
    let mut source = |n: usize| {
        let (x, y) = sphere_task(&link, &v_star, n, &mut train_rng);
        Tensor::new(vec![n, 1], y).map(|y| (x, y))
    };
    let mut config = TrainConfig::new(iterations, 8, eta, seed);
    config.projection_radius = Some(b);
    let run = train_forward_only(
        &vec![0.0; d],
        0.0,
        &mut source,
        &link,
        &config,
        Some(&v_star),
        (&ex, &ey),
        "prop",
    )
    .unwrap();
    Outcome {
        error: run.record.last().unwrap().eval_metric,
        large: run.large_descents.unwrap(),
        allowance: run.descent_allowance.unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_lands_in_ball(
        v in prop::collection::vec(-100.0f64..100.0, 1..20),
        radius in 0.1f64..50.0,
    ) {
        let mut p = v.clone();
        project_onto_ball(&mut p, radius);
        let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(norm <= radius * (1.0 + 1e-12));
        let orig = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if orig <= radius {
            prop_assert_eq!(p, v);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sgd_runs_are_reproducible(seed in any::<u64>(), d in 2usize..6) {
        let run = |seed: u64| {
            let mut net = parity_learner(d, seed).unwrap();
            let v = random_bits(d, &mut rng::seeded(seed));
            let mut t = 0u64;
            let mut source = |n: usize| {
                t += 1;
                parity_tensors(&gen_parity(d, &v, n, rng::derive_seed(seed, t))?)
            };
            let config = TrainConfig::new(30, 8, 0.1, seed);
            let rec = train_sgd(&mut net, &mut source, LossKind::Square, &config, "r", |_, _| Ok(0.0))
                .unwrap();
            (rec.series, rec.final_params_digest)
        };
        prop_assert_eq!(run(seed), run(seed));
    }

    #[test]
    fn forward_only_large_descents_within_allowance(seed in any::<u64>(), eta in 0.005f64..0.2) {
        let link = Link::Step { z: vec![-1.0, -0.3, 0.4, 1.0] };
        let out = forward_only_run(link, 6, 4.0, 400, eta, seed);
        prop_assert!((out.large as f64) <= out.allowance);
    }

    #[test]
    fn forward_only_reaches_eps_on_schedule(seed in any::<u64>()) {
        let link = Link::SmoothStep { z: vec![-1.0, 0.0, 1.0], c: 2.0 };
        let (l, c) = (link.lipschitz().unwrap(), link.range_bound().unwrap());
        let (b, eps) = (3.0, 0.2);
        let (t, eta) = forward_only_schedule(c, b, l, eps).unwrap();
        let out = forward_only_run(link, 8, b, t, eta, seed);
        prop_assert!(out.error <= eps, "error {} after {} iterations", out.error, t);
        prop_assert!((out.large as f64) <= out.allowance);
    }
}

#[test]
fn conditioned_iterations_do_not_grow_with_n() {
    let reach = |n: usize| {
        let mut spec = PwlSpec::default();
        spec.variants = vec![PwlVariant::ConvCond];
        spec.n = n;
        spec.conv_cond.eval_every = 1;
        spec.snapshots.clear();
        let out = run_pwl(&spec, 1).unwrap();
        out.get(PwlVariant::ConvCond)
            .unwrap()
            .record
            .first_reaching(|e| e <= 1e-3)
            .expect("conditioned run reaches 1e-3") as f64
    };
    let counts: Vec<f64> = [50, 100, 200].iter().map(|&n| reach(n)).collect();
    let ratio = counts[2] / counts[0];
    assert!(ratio <= 1.5, "iterations {counts:?}");
}
