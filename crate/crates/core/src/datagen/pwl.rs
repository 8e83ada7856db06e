use rand::seq::index::sample;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

/// A piecewise-linear curve sampled on the grid `0..n`.
///
/// The curve is `eval(x) = b + sum_i a_i [x - theta_i]_+`. The sampled
/// vector uses the convention that makes `f = W p` exact for the matrix
/// `W_ij = [i - j + 1]_+`: `p[theta_i] = a_i` and `f[t] = eval(t + 1)`
/// (all indices 0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct PwlCurve {
    pub n: usize,
    pub kpieces: usize,
    pub a: Vec<f64>,
    pub theta: Vec<usize>,
    pub b: f64,
    pub f: Vec<f64>,
    pub p: Vec<f64>,
}

impl PwlCurve {
    pub fn from_parts(n: usize, b: f64, a: Vec<f64>, theta: Vec<usize>) -> Result<Self> {
        if a.len() != theta.len() {
            return Err(Error::invalid("a and theta differ in length"));
        }
        if n == 0 {
            return Err(Error::invalid("grid size must be at least 1"));
        }
        let mut p = vec![0.0; n];
        for (&ai, &ti) in a.iter().zip(&theta) {
            if ti >= n {
                return Err(Error::invalid(format!("knot {ti} outside 0..{n}")));
            }
            p[ti] += ai;
        }
        // W p is a double running sum.
        let mut f = Vec::with_capacity(n);
        let (mut slope, mut value) = (0.0, b);
        for &pj in &p {
            slope += pj;
            value += slope;
            f.push(value);
        }
        Ok(Self {
            n,
            kpieces: a.len(),
            a,
            theta,
            b,
            f,
            p,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.b
            + self
                .a
                .iter()
                .zip(&self.theta)
                .map(|(a, &t)| a * (x - t as f64).max(0.0))
                .sum::<f64>()
    }
}

fn check(n: usize, kpieces: usize) -> Result<()> {
    if kpieces > n {
        return Err(Error::invalid(format!(
            "kpieces {kpieces} exceeds grid size {n}"
        )));
    }
    if n == 0 {
        return Err(Error::invalid("grid size must be at least 1"));
    }
    Ok(())
}

/// Knots uniform without replacement, slope changes uniform on `[-1, 1]`,
/// intercept 0.
pub fn gen_pwl(n: usize, kpieces: usize, seed: u64) -> Result<PwlCurve> {
    check(n, kpieces)?;
    let mut rng = rng::seeded(seed);
    let mut theta = sample(&mut rng, n, kpieces).into_vec();
    theta.sort_unstable();
    let a = (0..kpieces)
        .map(|_| {
            // Zero would drop a knot from p.
            loop {
                let v = rng.random_range(-1.0..=1.0);
                if v != 0.0 {
                    break v;
                }
            }
        })
        .collect();
    PwlCurve::from_parts(n, 0.0, a, theta)
}

/// Curves whose slope is +-1 everywhere and flips sign at exactly `kpieces`
/// knots drawn uniformly without replacement from `1..n`.
///
/// The initial slope is stored as an extra leading piece at knot 0, so `a`
/// and `theta` have `kpieces + 1` entries.
pub fn gen_pwl_slope_pm1(n: usize, kpieces: usize, seed: u64) -> Result<PwlCurve> {
    check(n, kpieces)?;
    if kpieces >= n {
        return Err(Error::invalid(format!(
            "kpieces {kpieces} slope flips need a grid larger than {n}"
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut knots: Vec<usize> = sample(&mut rng, n - 1, kpieces)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    knots.sort_unstable();
    let mut slope = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mut a = vec![slope];
    let mut theta = vec![0];
    for k in knots {
        a.push(-2.0 * slope);
        theta.push(k);
        slope = -slope;
    }
    let mut curve = PwlCurve::from_parts(n, 0.0, a, theta)?;
    curve.kpieces = kpieces;
    Ok(curve)
}
