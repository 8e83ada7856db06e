use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::datagen::{sample_line_image, LineImage};
use crate::engine::{sigmoid, Network, Tensor};
use crate::error::{Error, Result};
use crate::models::{lenet_scorer, parity_learner, ImageScale};
use crate::rng::{self, Rng};

/// Signal and noise of a stochastic gradient, both measured at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrReport {
    pub signal: f64,
    pub noise: f64,
    pub log_ratio: Option<f64>,
    pub k: usize,
    /// Dimension of the gradient being measured.
    pub d: usize,
    pub estimator_sample_count: usize,
    /// Noise is zero, so the ratio is undefined.
    pub degenerate: bool,
    pub shadow_f32: Option<ShadowF32>,
}

/// The same estimate accumulated in 32-bit floats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowF32 {
    pub signal: f32,
    pub noise: f32,
}

/// Streaming plug-in estimate of `||E v||^2` and `E ||v - E v||^2`.
#[derive(Debug, Clone)]
pub struct SnrAccumulator {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    shadow: Option<(Vec<f32>, Vec<f32>)>,
}

impl SnrAccumulator {
    pub fn new(dim: usize, shadow_f32: bool) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            shadow: shadow_f32.then(|| (vec![0.0; dim], vec![0.0; dim])),
        }
    }

    pub fn push(&mut self, v: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(v) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
        if let Some((mean, m2)) = &mut self.shadow {
            let n = self.count as f32;
            for ((m, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(v) {
                let x = x as f32;
                let delta = x - *m;
                *m += delta / n;
                *s += delta * (x - *m);
            }
        }
    }

    pub fn report(&self, k: usize) -> SnrReport {
        let n = self.count.max(1) as f64;
        let signal: f64 = self.mean.iter().map(|m| m * m).sum();
        let noise: f64 = self.m2.iter().sum::<f64>() / n;
        let degenerate = noise <= 0.0;
        let log_ratio = (signal > 0.0 && noise > 0.0).then(|| (signal / noise).ln());
        let shadow_f32 = self.shadow.as_ref().map(|(mean, m2)| ShadowF32 {
            signal: mean.iter().map(|m| m * m).sum(),
            noise: m2.iter().sum::<f32>() / n as f32,
        });
        SnrReport {
            signal,
            noise,
            log_ratio,
            k,
            d: self.mean.len(),
            estimator_sample_count: self.count,
            degenerate,
            shadow_f32,
        }
    }
}

/// SNR of the end-to-end and the decomposition gradient at the same point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrPair {
    pub end_to_end: SnrReport,
    pub decomposition: SnrReport,
}

struct Scored {
    features: Vec<f64>,
    score: f64,
    label: f64,
}

fn score_pool(bottom: &Network, images: &[LineImage]) -> Result<Vec<Scored>> {
    let last = bottom.layers().len() - 1;
    let size = bottom.input_shape()[1];
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(256) {
        let mut data = Vec::with_capacity(chunk.len() * size * size);
        for im in chunk {
            if im.size != size {
                return Err(Error::shape(format!(
                    "image size {} does not match network input {size}",
                    im.size
                )));
            }
            data.extend(im.as_f64());
        }
        let x = Tensor::new(vec![chunk.len(), 1, size, size], data)?;
        let (pred, cache) = bottom.forward(&x)?;
        let feats = cache.layer_input(last);
        let width = feats.len() / chunk.len();
        for (b, im) in chunk.iter().enumerate() {
            let mut f = feats[b * width..(b + 1) * width].to_vec();
            f.push(1.0);
            out.push(Scored {
                features: f,
                score: pred.data()[b],
                label: im.y as f64,
            });
        }
    }
    Ok(out)
}

/// How tuples are drawn from the image pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum TupleSampling {
    /// `samples` tuples drawn uniformly with replacement.
    MonteCarlo { samples: usize },
    /// Every one of the `pool^k` ordered tuples, so the moments are exact
    /// for the uniform distribution over the pool.
    Exhaustive,
}

/// Gradient SNR with respect to the last dense layer of `bottom` for the
/// composed predictor `top(sigmoid(bottom(x_1)), ..., sigmoid(bottom(x_k)))`.
///
/// Images are pushed through `bottom` once. The end-to-end vector is
/// `y~ * dp/dw`; the decomposition vector is `sum_l y_l * d bottom(x_l)/dw`.
pub fn estimate_snr(
    bottom: &Network,
    top: &Network,
    images: &[LineImage],
    sampling: TupleSampling,
    seed: u64,
    shadow_f32: bool,
) -> Result<SnrPair> {
    let k = top.input_len();
    if top.output_len() != 1 || bottom.output_len() != 1 {
        return Err(Error::invalid("both networks must have scalar outputs"));
    }
    if images.is_empty() {
        return Err(Error::invalid("empty image pool"));
    }
    let pool = score_pool(bottom, images)?;
    let p = pool.len();
    let total = match sampling {
        TupleSampling::MonteCarlo { samples } => samples,
        TupleSampling::Exhaustive => p
            .checked_pow(k as u32)
            .filter(|&t| t <= 1 << 26)
            .ok_or_else(|| Error::TooLarge(format!("{p}^{k} tuples")))?,
    };
    let dim = pool[0].features.len();
    let mut e2e = SnrAccumulator::new(dim, shadow_f32);
    let mut dec = SnrAccumulator::new(dim, shadow_f32);
    let mut rng = rng::seeded(seed);
    let batch = 2048;
    let mut done = 0;
    let mut v_e2e = vec![0.0; dim];
    let mut v_dec = vec![0.0; dim];
    while done < total {
        let m = batch.min(total - done);
        let idx: Vec<usize> = match sampling {
            TupleSampling::MonteCarlo { .. } => {
                (0..m * k).map(|_| rng.random_range(0..p)).collect()
            }
            TupleSampling::Exhaustive => (done..done + m)
                .flat_map(|t| (0..k).map(move |l| (t / p.pow(l as u32)) % p))
                .collect(),
        };
        let inputs: Vec<f64> = idx.iter().map(|&i| sigmoid(pool[i].score)).collect();
        let x = Tensor::new(vec![m, k], inputs.clone())?;
        let (_, cache) = top.forward(&x)?;
        let dtop = top
            .backward(&cache, &Tensor::new(vec![m, 1], vec![1.0; m])?)?
            .input;
        for b in 0..m {
            v_e2e.iter_mut().for_each(|v| *v = 0.0);
            v_dec.iter_mut().for_each(|v| *v = 0.0);
            let mut y_tilde = 1.0;
            for l in 0..k {
                let s = &pool[idx[b * k + l]];
                y_tilde *= s.label;
                let sg = inputs[b * k + l];
                let c = dtop[b * k + l] * sg * (1.0 - sg);
                for ((e, dv), f) in v_e2e.iter_mut().zip(v_dec.iter_mut()).zip(&s.features) {
                    *e += c * f;
                    *dv += s.label * f;
                }
            }
            v_e2e.iter_mut().for_each(|v| *v *= y_tilde);
            e2e.push(&v_e2e);
            dec.push(&v_dec);
        }
        done += m;
    }
    Ok(SnrPair {
        end_to_end: e2e.report(k),
        decomposition: dec.report(k),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrConfig {
    pub k: usize,
    pub scale: ImageScale,
    /// Images per pool; half slope up, half slope down.
    pub pool_size: usize,
    pub sampling: TupleSampling,
    pub inits: usize,
    pub shadow_f32: bool,
}

impl SnrConfig {
    /// Monte-Carlo over a pool of 2000 images.
    pub fn monte_carlo(k: usize, samples: usize) -> Self {
        Self {
            k,
            scale: ImageScale::Full,
            pool_size: 2000,
            sampling: TupleSampling::MonteCarlo { samples },
            inits: 10,
            shadow_f32: false,
        }
    }

    /// Exhaustive enumeration of all tuples over a pool of 40 images.
    pub fn exhaustive(k: usize) -> Self {
        Self {
            k,
            scale: ImageScale::Full,
            pool_size: 40,
            sampling: TupleSampling::Exhaustive,
            inits: 10,
            shadow_f32: false,
        }
    }
}

/// `count` images with labels split evenly between +1 and -1.
pub fn balanced_pool(size: usize, count: usize, rng: &mut Rng) -> Result<Vec<LineImage>> {
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    while pos.len() + neg.len() < count {
        let im = sample_line_image(size, rng)?;
        if im.y > 0 && pos.len() < count.div_ceil(2) {
            pos.push(im);
        } else if im.y < 0 && neg.len() < count / 2 {
            neg.push(im);
        }
    }
    pos.extend(neg);
    Ok(pos)
}

/// SNR at initialization averaged over `cfg.inits` random initializations.
///
/// Signal and noise are averaged separately across initializations and
/// the log ratio is taken of the averages.
pub fn snr_at_init(cfg: &SnrConfig, seed: u64) -> Result<(SnrPair, Vec<SnrPair>)> {
    if cfg.k == 0 || cfg.inits == 0 || cfg.pool_size == 0 {
        return Err(Error::invalid(
            "snr needs k >= 1, one init and a non-empty pool",
        ));
    }
    if let TupleSampling::MonteCarlo { samples } = cfg.sampling {
        if samples < 1000 {
            return Err(Error::invalid(
                "Monte-Carlo snr needs at least 1000 samples",
            ));
        }
    }
    let mut runs = Vec::with_capacity(cfg.inits);
    for i in 0..cfg.inits as u64 {
        let s = rng::derive_seed(seed, i);
        let bottom = lenet_scorer(cfg.scale, rng::derive_seed(s, 1))?;
        let top = parity_learner(cfg.k, rng::derive_seed(s, 2))?;
        let mut img_rng = rng::substream(s, 3);
        let images = balanced_pool(cfg.scale.image_size(), cfg.pool_size, &mut img_rng)?;
        runs.push(estimate_snr(
            &bottom,
            &top,
            &images,
            cfg.sampling,
            rng::derive_seed(s, 4),
            cfg.shadow_f32,
        )?);
    }
    let avg = |pick: fn(&SnrPair) -> &SnrReport| {
        let n = runs.len() as f64;
        let signal = runs.iter().map(|r| pick(r).signal).sum::<f64>() / n;
        let noise = runs.iter().map(|r| pick(r).noise).sum::<f64>() / n;
        let first = pick(&runs[0]);
        SnrReport {
            signal,
            noise,
            log_ratio: (signal > 0.0 && noise > 0.0).then(|| (signal / noise).ln()),
            k: first.k,
            d: first.d,
            estimator_sample_count: runs.iter().map(|r| pick(r).estimator_sample_count).sum(),
            degenerate: noise <= 0.0,
            shadow_f32: None,
        }
    };
    let pair = SnrPair {
        end_to_end: avg(|p| &p.end_to_end),
        decomposition: avg(|p| &p.decomposition),
    };
    Ok((pair, runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_vector_is_degenerate() {
        let mut acc = SnrAccumulator::new(3, true);
        for _ in 0..10 {
            acc.push(&[1.0, 2.0, -2.0]);
        }
        let r = acc.report(1);
        assert_eq!(r.noise, 0.0);
        assert!(r.degenerate);
        assert!((r.signal - 9.0).abs() < 1e-12);
        assert_eq!(r.log_ratio, None);
        assert_eq!(r.shadow_f32.unwrap().noise, 0.0);
    }

    #[test]
    fn aligned_gradient() {
        // h(x) g(x) with g = h c and h = +-1 is the constant c.
        let c = [0.5, -1.5];
        let mut acc = SnrAccumulator::new(2, false);
        for i in 0..100 {
            let h: f64 = if i % 3 == 0 { -1.0 } else { 1.0 };
            let g: Vec<f64> = c.iter().map(|v| h * v).collect();
            acc.push(&g.iter().map(|v| h * v).collect::<Vec<_>>());
        }
        let r = acc.report(1);
        assert!((r.signal - 2.5).abs() < 1e-12);
        assert_eq!(r.noise, 0.0);
    }

    #[test]
    fn plug_in_matches_two_pass() {
        let xs = [[1.0, 0.0], [3.0, 2.0], [-1.0, 4.0]];
        let mut acc = SnrAccumulator::new(2, false);
        xs.iter().for_each(|x| acc.push(x));
        let r = acc.report(1);
        let mean = [1.0, 2.0];
        let noise = xs
            .iter()
            .map(|x| (x[0] - mean[0]).powi(2) + (x[1] - mean[1]).powi(2))
            .sum::<f64>()
            / 3.0;
        assert!((r.signal - 5.0).abs() < 1e-12);
        assert!((r.noise - noise).abs() < 1e-12);
    }
}
