use serde::{Deserialize, Serialize};

use crate::datagen::{StockSample, StockTask};
use crate::engine::{Network, Tensor};
use crate::error::{Error, Result};
use crate::rng;
use crate::stats::{dot, RunningStats};

/// Second moments of the two gradient estimators on shared inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRatio {
    /// `E_x sum_i ||G_i||^2`.
    pub e2e_noise: f64,
    /// `E_x ||G_{y(x)}||^2`.
    pub decomp_noise: f64,
    pub ratio: f64,
    pub sample_count: usize,
}

/// Gradients `G_i = d N_w(x)_i / dw` for every output `i`.
pub fn output_gradients(net: &Network, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let k = net.output_len();
    let input = Tensor::new(vec![1, x.len()], x.to_vec())?;
    let (_, cache) = net.forward(&input)?;
    (0..k)
        .map(|i| {
            let mut e = vec![0.0; k];
            e[i] = 1.0;
            Ok(net.backward(&cache, &Tensor::new(vec![1, k], e)?)?.params)
        })
        .collect()
}

/// With `z_y = 1` and the other `z_i` independent signs, the end-to-end
/// estimator `-sum_i z_i G_i` has second moment `sum_i ||G_i||^2` (cross
/// terms vanish in expectation); the decomposition estimator `-G_y` has
/// `||G_y||^2`.
pub fn stocks_noise_ratio(net: &Network, samples: &[StockSample]) -> Result<NoiseRatio> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    let (mut e2e, mut dec) = (0.0, 0.0);
    for s in samples {
        let g = output_gradients(net, &s.x)?;
        if s.y >= g.len() {
            return Err(Error::invalid("label outside the network outputs"));
        }
        e2e += g.iter().map(|gi| dot(gi, gi)).sum::<f64>();
        dec += dot(&g[s.y], &g[s.y]);
    }
    let n = samples.len() as f64;
    Ok(NoiseRatio {
        e2e_noise: e2e / n,
        decomp_noise: dec / n,
        ratio: e2e / dec,
        sample_count: samples.len(),
    })
}

/// Comparison of the two estimators' empirical means at one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorAgreement {
    /// `||mean(decomposition - end-to-end)||`.
    pub mean_difference_norm: f64,
    /// `sqrt(trace(Cov(difference)) / draws)`.
    pub std_error: f64,
    pub draws: usize,
}

impl EstimatorAgreement {
    pub fn z_score(&self) -> f64 {
        self.mean_difference_norm / self.std_error
    }
}

/// Draws `z` repeatedly at the fixed input `x` and compares the mean
/// end-to-end gradient `-sum_i z_i G_i` with the decomposition gradient
/// `-G_y`. The per-draw difference is `sum_{i != y} z_i G_i`, so its mean
/// and covariance trace follow from the mean and covariance of `z` and the
/// Gram matrix of the `G_i`.
pub fn stocks_estimator_agreement(
    net: &Network,
    task: &StockTask,
    x: &[f64],
    draws: usize,
    seed: u64,
) -> Result<EstimatorAgreement> {
    if draws < 2 {
        return Err(Error::invalid("need at least two draws"));
    }
    let g = output_gradients(net, x)?;
    let k = g.len();
    let y = task.label(x);
    let gram: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| dot(&g[i], &g[j])).collect())
        .collect();
    let mut rng = rng::seeded(seed);
    let mut mean = vec![0.0; k];
    let mut cov = vec![vec![0.0; k]; k];
    let mut count = 0.0;
    for _ in 0..draws {
        let z = task.sample_z(y, &mut rng);
        count += 1.0;
        let delta: Vec<f64> = z.iter().zip(&mean).map(|(a, m)| a - m).collect();
        for (m, dlt) in mean.iter_mut().zip(&delta) {
            *m += dlt / count;
        }
        for i in 0..k {
            if i == y {
                continue;
            }
            let after = z[i] - mean[i];
            for j in 0..k {
                if j != y {
                    cov[i][j] += delta[j] * after;
                }
            }
        }
    }
    let mut mean_sq = 0.0;
    let mut trace = 0.0;
    for i in (0..k).filter(|&i| i != y) {
        for j in (0..k).filter(|&j| j != y) {
            mean_sq += mean[i] * mean[j] * gram[i][j];
            trace += cov[i][j] / (count - 1.0) * gram[i][j];
        }
    }
    Ok(EstimatorAgreement {
        mean_difference_norm: mean_sq.max(0.0).sqrt(),
        std_error: (trace / count).sqrt(),
        draws,
    })
}

/// Monte-Carlo of the expected loss gradient under both estimators over
/// shared `x` draws, as a sanity check of unbiasedness across inputs.
pub fn stocks_shared_x_agreement(
    net: &Network,
    task: &StockTask,
    draws: usize,
    seed: u64,
) -> Result<EstimatorAgreement> {
    let mut rng = rng::seeded(seed);
    let p = net.param_count();
    let mut stats = vec![RunningStats::new(); p];
    for _ in 0..draws {
        let s = task.sample(&mut rng);
        let g = output_gradients(net, &s.x)?;
        for (c, st) in stats.iter_mut().enumerate() {
            let diff: f64 = (0..g.len())
                .filter(|&i| i != s.y)
                .map(|i| s.z[i] * g[i][c])
                .sum();
            st.push(diff);
        }
    }
    let mean_sq: f64 = stats.iter().map(|s| s.mean * s.mean).sum();
    let var: f64 = stats.iter().map(|s| s.variance()).sum();
    Ok(EstimatorAgreement {
        mean_difference_norm: mean_sq.sqrt(),
        std_error: (var / draws as f64).sqrt(),
        draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{InitScheme, LayerKind, NetworkBuilder};
    use crate::models::simplex_head;

    #[test]
    fn single_output_ratio_is_one() {
        let net = NetworkBuilder::new(vec![3])
            .dense(1)
            .build(InitScheme::UniformFanIn, 1)
            .unwrap();
        let task = StockTask::new(3, 1, 2).unwrap();
        let mut r = rng::seeded(3);
        let samples: Vec<_> = (0..20).map(|_| task.sample(&mut r)).collect();
        assert_eq!(stocks_noise_ratio(&net, &samples).unwrap().ratio, 1.0);
    }

    #[test]
    fn equal_gradients_give_k() {
        // Identical rows in a bias-free dense map: every G_i has the same norm.
        let k = 5;
        let net = NetworkBuilder::new(vec![4])
            .layer(LayerKind::dense_no_bias(k))
            .build(InitScheme::UniformFanIn, 1)
            .unwrap();
        let task = StockTask::new(4, k, 2).unwrap();
        let mut r = rng::seeded(3);
        let samples: Vec<_> = (0..10).map(|_| task.sample(&mut r)).collect();
        let ratio = stocks_noise_ratio(&net, &samples).unwrap().ratio;
        assert!((ratio - k as f64).abs() < 1e-12);
    }

    #[test]
    fn estimators_agree_at_fixed_x() {
        let net = simplex_head(6, 4, 1).unwrap();
        let task = StockTask::new(6, 4, 2).unwrap();
        let x = task.sample_x(&mut rng::seeded(4));
        let a = stocks_estimator_agreement(&net, &task, &x, 20_000, 5).unwrap();
        assert!(a.z_score() < 4.0, "{a:?}");
        let b = stocks_shared_x_agreement(&net, &task, 2000, 6).unwrap();
        assert!(b.z_score() < 4.0, "{b:?}");
    }
}
