use rand_distr::{Distribution, StandardNormal};

use crate::engine::sigmoid;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Default step levels `z_i = i` for `i = 0..=55`.
pub fn default_levels() -> Vec<f64> {
    (0..56).map(|i| i as f64).collect()
}

pub fn check_levels(z: &[f64]) -> Result<()> {
    if z.is_empty() {
        return Err(Error::invalid("step levels are empty"));
    }
    if z.iter().any(|v| !v.is_finite()) || z.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(
            "step levels must be finite and strictly increasing",
        ));
    }
    Ok(())
}

/// Rounds `r` down to the largest level strictly below it, or `z_0`.
pub fn step_u(r: f64, z: &[f64]) -> f64 {
    let below = z.partition_point(|&zi| zi < r);
    if below <= 1 {
        z[0]
    } else {
        z[below - 1]
    }
}

/// Smooth surrogate `z_0 + sum_i (z_i - z_{i-1}) sigmoid(c (r - z_i))`.
pub fn step_u_tilde(r: f64, z: &[f64], c: f64) -> f64 {
    z[0] + z
        .windows(2)
        .map(|w| (w[1] - w[0]) * sigmoid(c * (r - w[1])))
        .sum::<f64>()
}

pub fn step_u_tilde_deriv(r: f64, z: &[f64], c: f64) -> f64 {
    z.windows(2)
        .map(|w| {
            let s = sigmoid(c * (r - w[1]));
            (w[1] - w[0]) * c * s * (1.0 - s)
        })
        .sum()
}

/// Class index of `step_u(r, z)` within `z`.
pub fn step_class(r: f64, z: &[f64]) -> usize {
    z.partition_point(|&zi| zi < r).saturating_sub(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepTask {
    pub v_star: Vec<f64>,
    pub b_star: f64,
    pub z: Vec<f64>,
    pub samples: Vec<(Vec<f64>, f64)>,
}

impl StepTask {
    pub fn d(&self) -> usize {
        self.v_star.len()
    }

    pub fn label(&self, x: &[f64]) -> f64 {
        let r: f64 = self.b_star + self.v_star.iter().zip(x).map(|(v, x)| v * x).sum::<f64>();
        step_u(r, &self.z)
    }

    pub fn sample_x(d: usize, rng: &mut Rng) -> Vec<f64> {
        (0..d).map(|_| StandardNormal.sample(rng)).collect()
    }

    /// Fresh labeled Gaussian samples for this teacher.
    pub fn draw(&self, count: usize, rng: &mut Rng) -> Vec<(Vec<f64>, f64)> {
        (0..count)
            .map(|_| {
                let x = Self::sample_x(self.d(), rng);
                let y = self.label(&x);
                (x, y)
            })
            .collect()
    }

    /// Task with an explicit teacher; samples drawn from `seed`.
    pub fn with_teacher(
        v_star: Vec<f64>,
        b_star: f64,
        z: Vec<f64>,
        count: usize,
        seed: u64,
    ) -> Result<Self> {
        check_levels(&z)?;
        if v_star.is_empty() {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        let mut task = Self {
            v_star,
            b_star,
            z,
            samples: Vec::new(),
        };
        task.samples = task.draw(count, &mut rng::seeded(seed));
        Ok(task)
    }
}

/// Teacher `v*` uniform on the unit sphere and `b*` at the middle of the
/// level range; `x ~ N(0, I_d)`.
pub fn gen_step_task(d: usize, z: &[f64], count: usize, seed: u64) -> Result<StepTask> {
    check_levels(z)?;
    if d < 1 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    let mut rng = rng::substream(seed, 0);
    let mut v = StepTask::sample_x(d, &mut rng);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let b_star = 0.5 * (z[0] + z[z.len() - 1]);
    StepTask::with_teacher(v, b_star, z.to_vec(), count, rng::derive_seed(seed, 1))
}
