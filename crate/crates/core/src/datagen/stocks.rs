use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct StockSample {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub y: usize,
}

/// Labeling `y(x) = argmax_j u_j . x` over `k` fixed random unit vectors,
/// with `z_y = 1` and the other coordinates uniform +-1.
#[derive(Debug, Clone, PartialEq)]
pub struct StockTask {
    pub d: usize,
    pub k: usize,
    /// Row-major `k * d`.
    pub directions: Vec<f64>,
}

impl StockTask {
    pub fn new(d: usize, k: usize, seed: u64) -> Result<Self> {
        if d < 1 || k < 1 {
            return Err(Error::invalid("stock task needs d >= 1 and k >= 1"));
        }
        let mut rng = rng::seeded(seed);
        let mut directions = Vec::with_capacity(k * d);
        for _ in 0..k {
            let row: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            directions.extend(row.iter().map(|v| v / norm));
        }
        Ok(Self { d, k, directions })
    }

    pub fn label(&self, x: &[f64]) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for j in 0..self.k {
            let s: f64 = self.directions[j * self.d..(j + 1) * self.d]
                .iter()
                .zip(x)
                .map(|(u, x)| u * x)
                .sum();
            if s > best.1 {
                best = (j, s);
            }
        }
        best.0
    }

    pub fn sample_x(&self, rng: &mut Rng) -> Vec<f64> {
        (0..self.d).map(|_| StandardNormal.sample(rng)).collect()
    }

    pub fn sample_z(&self, y: usize, rng: &mut Rng) -> Vec<f64> {
        (0..self.k)
            .map(|i| {
                if i == y || rng.random_bool(0.5) {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect()
    }

    pub fn sample(&self, rng: &mut Rng) -> StockSample {
        let x = self.sample_x(rng);
        let y = self.label(&x);
        let z = self.sample_z(y, rng);
        StockSample { x, z, y }
    }
}

pub fn gen_stock_sample(d: usize, kstocks: usize, seed: u64) -> Result<StockSample> {
    let task = StockTask::new(d, kstocks, rng::derive_seed(seed, 0))?;
    Ok(task.sample(&mut rng::substream(seed, 1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn winning_coordinate_is_one() {
        let task = StockTask::new(20, 7, 1).unwrap();
        let mut rng = rng::seeded(2);
        for _ in 0..200 {
            let s = task.sample(&mut rng);
            assert_eq!(s.z[s.y], 1.0);
            assert_eq!(s.y, task.label(&s.x));
            assert!(s.z.iter().all(|&v| v == 1.0 || v == -1.0));
        }
    }

    #[test]
    fn single_sample_deterministic() {
        assert_eq!(
            gen_stock_sample(5, 3, 9).unwrap(),
            gen_stock_sample(5, 3, 9).unwrap()
        );
        assert!(gen_stock_sample(0, 3, 9).is_err());
    }
}
