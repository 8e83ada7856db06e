use std::f64::consts::FRAC_PI_2;

use rand_distr::{Distribution, StandardNormal};

use super::variance::{VarianceMethod, VarianceReport};
use crate::closedform::arcsine_law;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::stats::{dot, RunningStats};

fn unit_vector(d: usize, rng: &mut Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let n = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// `p_w(x_1..x_k) = sum_j w_j prod_l sign(v_j . x_l)` over fixed unit
/// directions `v_j`. Its gradient in `w` is the feature vector itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SignFeaturePredictor {
    pub d: usize,
    pub directions: Vec<Vec<f64>>,
}

impl SignFeaturePredictor {
    pub fn random(d: usize, features: usize, seed: u64) -> Result<Self> {
        if d < 2 || features == 0 {
            return Err(Error::invalid("need d >= 2 and at least one feature"));
        }
        let mut rng = rng::seeded(seed);
        Ok(Self {
            d,
            directions: (0..features).map(|_| unit_vector(d, &mut rng)).collect(),
        })
    }

    pub fn features(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        self.directions
            .iter()
            .map(|v| xs.iter().map(|x| dot(v, x).signum()).product())
            .collect()
    }
}

/// How `E_x[h_u(x) dp/dw(x)]` is obtained for each sampled target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerExpectation {
    /// Arcsine law: `E[h_u g_j] = ((2/pi) asin(u . v_j))^k`.
    Exact,
    /// Average over this many Gaussian tuples.
    MonteCarlo(usize),
}

/// Monte-Carlo estimate over `u` uniform on the sphere of the gradient
/// variance of the square loss for targets `h_u(x) = prod_l sign(u . x_l)`.
///
/// Each target contributes `z_u = Q_u - <m_u, mean of the other m>`, where
/// `Q_u` estimates `||E_x h_u g||^2` without bias; the mean of `z_u` is the
/// unbiased variance estimate and its spread gives the standard error.
/// The bound field holds the envelope `G^2 (k ln d / d)^(k/2)` without
/// constants.
pub fn theorem3_variance_estimate(
    k: usize,
    d: usize,
    num_targets: usize,
    inner: InnerExpectation,
    predictor: &SignFeaturePredictor,
    seed: u64,
) -> Result<VarianceReport> {
    if k == 0 || num_targets < 2 || predictor.d != d {
        return Err(Error::invalid(
            "need k >= 1, at least two targets and a predictor of matching dimension",
        ));
    }
    let j = predictor.directions.len();
    let mut rng = rng::seeded(seed);
    let mut means = Vec::with_capacity(num_targets);
    let mut sq = Vec::with_capacity(num_targets);
    for _ in 0..num_targets {
        let u = unit_vector(d, &mut rng);
        match inner {
            InnerExpectation::Exact => {
                let m: Vec<f64> = predictor
                    .directions
                    .iter()
                    .map(|v| arcsine_law(dot(&u, v)).powi(k as i32))
                    .collect();
                sq.push(dot(&m, &m));
                means.push(m);
            }
            InnerExpectation::MonteCarlo(s) => {
                if s < 2 {
                    return Err(Error::invalid(
                        "Monte-Carlo inner expectation needs 2 samples",
                    ));
                }
                let mut sum = vec![0.0; j];
                let mut self_sq = 0.0;
                for _ in 0..s {
                    let xs: Vec<Vec<f64>> = (0..k)
                        .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
                        .collect();
                    let h: f64 = xs.iter().map(|x| dot(&u, x).signum()).product();
                    let g = predictor.features(&xs);
                    for (acc, gi) in sum.iter_mut().zip(&g) {
                        *acc += h * gi;
                    }
                    self_sq += dot(&g, &g);
                }
                let s = s as f64;
                sq.push((dot(&sum, &sum) - self_sq) / (s * (s - 1.0)));
                means.push(sum.iter().map(|v| v / s).collect());
            }
        }
    }
    let n = num_targets as f64;
    let mut total = vec![0.0; j];
    for m in &means {
        for (t, v) in total.iter_mut().zip(m) {
            *t += v;
        }
    }
    let stats: RunningStats = means
        .iter()
        .zip(&sq)
        .map(|(m, &q)| {
            let others: Vec<f64> = total
                .iter()
                .zip(m)
                .map(|(t, v)| (t - v) / (n - 1.0))
                .collect();
            q - dot(m, &others)
        })
        .collect();
    let g_squared = j as f64;
    let bound = g_squared * ((k as f64) * (d as f64).ln() / d as f64).powf(k as f64 / 2.0);
    Ok(VarianceReport {
        measured_variance: stats.mean,
        bound,
        family_size: num_targets,
        g_squared,
        method: VarianceMethod::MonteCarlo,
        sample_count: match inner {
            InnerExpectation::Exact => num_targets,
            InnerExpectation::MonteCarlo(s) => num_targets * s,
        },
        std_error: Some(stats.std_error()),
    })
}

/// `E[phi(u . v)]` for `u` uniform on the unit sphere of `R^d`, by Simpson's
/// rule after the substitution `t = sin(a)`, under which the density of
/// `t` becomes proportional to `cos(a)^(d-2)`.
pub fn sphere_projection_expectation(d: usize, phi: impl Fn(f64) -> f64) -> f64 {
    let intervals = 20_000;
    let h = 2.0 * FRAC_PI_2 / intervals as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=intervals {
        let a = -FRAC_PI_2 + i as f64 * h;
        let w = if i == 0 || i == intervals {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let dens = a.cos().max(0.0).powi(d as i32 - 2);
        num += w * dens * phi(a.sin());
        den += w * dens;
    }
    num / den
}

/// Exact variance for `features` sign features:
/// `J (E[q^{2k}] - E[q^k]^2)` with `q(t) = (2/pi) asin(t)`.
pub fn theorem3_exact_variance(k: usize, d: usize, features: usize) -> Result<f64> {
    if d < 2 || k == 0 {
        return Err(Error::invalid("need d >= 2 and k >= 1"));
    }
    let m2 = sphere_projection_expectation(d, |t| arcsine_law(t).powi(2 * k as i32));
    let m1 = sphere_projection_expectation(d, |t| arcsine_law(t).powi(k as i32));
    Ok(features as f64 * (m2 - m1 * m1))
}
