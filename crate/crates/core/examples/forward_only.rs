//! The forward-only update on a single-index model with a smooth
//! staircase link, run on the schedule that guarantees error `eps`.

use graddiag::engine::Tensor;
use graddiag::rng;
use graddiag::trainers::{forward_only_schedule, train_forward_only, Link, TrainConfig};
use rand_distr::{Distribution, StandardNormal};

fn sphere(d: usize, r: &mut rng::Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(r)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn main() -> graddiag::Result<()> {
    let link = Link::SmoothStep {
        z: vec![-1.0, 0.0, 1.0],
        c: 2.0,
    };
    let (d, b, eps) = (10, 3.0, 0.1);
    let (l, c) = (link.lipschitz().unwrap(), link.range_bound().unwrap());
    let (t, eta) = forward_only_schedule(c, b, l, eps)?;
    println!("schedule: T = {t}, eta = {eta:.5}");

    let mut r = rng::seeded(0);
    let v_star: Vec<f64> = sphere(d, &mut r).into_iter().map(|x| b * x).collect();
    let label = |x: &[f64]| link.value(x.iter().zip(&v_star).map(|(a, b)| a * b).sum());
    let eval: Vec<Vec<f64>> = (0..2000).map(|_| sphere(d, &mut r)).collect();
    let ey: Vec<f64> = eval.iter().map(|x| label(x)).collect();
    let ex = Tensor::from_rows(&eval)?;

    let mut source = |n: usize| {
        let xs: Vec<Vec<f64>> = (0..n).map(|_| sphere(d, &mut r)).collect();
        let ys = xs.iter().map(|x| label(x)).collect();
        Ok((Tensor::from_rows(&xs)?, Tensor::new(vec![n, 1], ys)?))
    };
    let mut config = TrainConfig::new(t, 10, eta, 0);
    config.projection_radius = Some(b);
    config.eval_every = t / 6;
    let run = train_forward_only(
        &vec![0.0; d],
        0.0,
        &mut source,
        &link,
        &config,
        Some(&v_star),
        (&ex, &ey),
        "demo",
    )?;
    for p in &run.record.series {
        println!("iteration {:>5}  mse {:.3e}", p.iteration, p.eval_metric);
    }
    println!(
        "large descents {} (allowance {:.0})",
        run.large_descents.unwrap_or(0),
        run.descent_allowance.unwrap_or(0.0)
    );
    Ok(())
}
