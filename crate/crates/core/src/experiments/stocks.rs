use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{comparison_plot, par_map, write_svg, Check};
use crate::datagen::{StockSample, StockTask};
use crate::diagnostics::stocks_noise_ratio;
use crate::engine::{LossKind, Network, Tensor};
use crate::error::{Error, Result};
use crate::models::simplex_head;
use crate::rng;
use crate::trainers::{train_sgd, RunRecord, TrainConfig, EVAL_SEED_OFFSET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StocksApproach {
    /// Gradient of `-z^T N(x)` with the sampled `z`.
    EndToEnd,
    /// Gradient of `-e_y^T N(x)`, ignoring `z`.
    Decomposition,
}

impl StocksApproach {
    pub fn tag(self) -> &'static str {
        match self {
            StocksApproach::EndToEnd => "end_to_end",
            StocksApproach::Decomposition => "decomposition",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StocksSpec {
    pub seed: u64,
    pub ks: Vec<usize>,
    pub approaches: Vec<StocksApproach>,
    pub d: usize,
    pub train: TrainConfig,
    pub eval_size: usize,
    /// Both approaches are timed against the loss `-(1/k + q (1 - 1/k))`,
    /// the fraction `q` of the way from the uniform head to the optimum.
    pub threshold_fraction: f64,
    /// Inputs used for the gradient second-moment ratio at init.
    pub noise_samples: usize,
}

impl Default for StocksSpec {
    fn default() -> Self {
        let mut train = TrainConfig::new(2_000, 32, 1.0, 0);
        train.eval_every = 20;
        Self {
            seed: 0,
            ks: vec![10, 100, 500],
            approaches: vec![StocksApproach::EndToEnd, StocksApproach::Decomposition],
            d: 1000,
            train,
            eval_size: 500,
            threshold_fraction: 0.05,
            noise_samples: 100,
        }
    }
}

impl StocksSpec {
    pub fn threshold(&self, k: usize) -> f64 {
        let floor = 1.0 / k as f64;
        -(floor + self.threshold_fraction * (1.0 - floor))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StocksRun {
    pub k: usize,
    pub loss_threshold: f64,
    pub approach: StocksApproach,
    pub record: RunRecord,
    /// First checkpoint whose expected loss is at most the threshold.
    pub iterations_to_threshold: Option<usize>,
    /// `E||end-to-end||^2 / E||decomposition||^2` at init.
    pub init_noise_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StocksOutcome {
    pub runs: Vec<StocksRun>,
}

/// `E_z[-z^T N(x)] = -N(x)_y`, averaged over `samples`.
pub fn expected_loss(net: &Network, samples: &[StockSample]) -> Result<f64> {
    let d = net.input_len();
    let x = Tensor::new(
        vec![samples.len(), d],
        samples.iter().flat_map(|s| s.x.iter().copied()).collect(),
    )?;
    let out = net.predict(&x)?;
    let total: f64 = samples
        .iter()
        .enumerate()
        .map(|(i, s)| -out.row(i)[s.y])
        .sum();
    Ok(total / samples.len().max(1) as f64)
}

fn run_one(spec: &StocksSpec, k: usize, approach: StocksApproach) -> Result<StocksRun> {
    if k < 2 {
        return Err(Error::invalid("stocks needs k >= 2"));
    }
    // Both approaches share task, data and init for a given k.
    let seed = rng::derive_seed(spec.seed, k as u64);
    let task = StockTask::new(spec.d, k, rng::derive_seed(seed, 0))?;
    let mut config = spec.train.clone();
    config.seed = seed;
    let mut eval_rng = rng::seeded(seed.wrapping_add(EVAL_SEED_OFFSET));
    let eval: Vec<StockSample> = (0..spec.eval_size)
        .map(|_| task.sample(&mut eval_rng))
        .collect();
    let mut net = simplex_head(spec.d, k, rng::derive_seed(seed, 2))?;
    let init_noise_ratio =
        stocks_noise_ratio(&net, &eval[..spec.noise_samples.min(eval.len())])?.ratio;

    let mut data = rng::substream(seed, 1);
    let mut source = |b: usize| {
        let mut xs = Vec::with_capacity(b * spec.d);
        let mut ts = Vec::with_capacity(b * k);
        for _ in 0..b {
            let s = task.sample(&mut data);
            xs.extend_from_slice(&s.x);
            match approach {
                StocksApproach::EndToEnd => ts.extend_from_slice(&s.z),
                StocksApproach::Decomposition => {
                    ts.extend((0..k).map(|i| if i == s.y { 1.0 } else { 0.0 }))
                }
            }
        }
        Ok((
            Tensor::new(vec![b, spec.d], xs)?,
            Tensor::new(vec![b, k], ts)?,
        ))
    };
    let record = train_sgd(
        &mut net,
        &mut source,
        LossKind::NegativeInnerProduct,
        &config,
        &format!("{}_k{k}", approach.tag()),
        |n, _| expected_loss(n, &eval),
    )?;
    let loss_threshold = spec.threshold(k);
    let iterations_to_threshold = record.first_reaching(|l| l <= loss_threshold);
    let mut record = record;
    record
        .metrics
        .insert("init_noise_ratio".into(), init_noise_ratio);
    if let Some(t) = iterations_to_threshold {
        record
            .metrics
            .insert("iterations_to_threshold".into(), t as f64);
    }
    Ok(StocksRun {
        k,
        loss_threshold,
        approach,
        record,
        iterations_to_threshold,
        init_noise_ratio,
    })
}

/// Trains the same softmax head with both gradient estimators per `k`.
pub fn run_stocks(spec: &StocksSpec, jobs: usize) -> Result<StocksOutcome> {
    let mut items = Vec::new();
    for &k in &spec.ks {
        for &a in &spec.approaches {
            items.push((k, a));
        }
    }
    let runs = par_map(jobs, items, |(k, a)| run_one(spec, k, a))?;
    Ok(StocksOutcome { runs })
}

impl StocksOutcome {
    pub fn get(&self, k: usize, approach: StocksApproach) -> Option<&StocksRun> {
        self.runs
            .iter()
            .find(|r| r.k == k && r.approach == approach)
    }

    /// Decomposition's iterations to threshold over end-to-end's; a run
    /// that never reaches it counts as infinitely slow.
    pub fn speedup_ratio(&self, k: usize) -> Option<f64> {
        let d = self.get(k, StocksApproach::Decomposition)?;
        let e = self.get(k, StocksApproach::EndToEnd)?;
        let t = |r: &StocksRun| {
            r.iterations_to_threshold
                .map_or(f64::INFINITY, |t| t as f64)
        };
        Some(t(d) / t(e))
    }

    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        let mut ks: Vec<usize> = self.runs.iter().map(|r| r.k).collect();
        ks.dedup();
        for k in ks {
            if let Some(r) = self
                .get(k, StocksApproach::Decomposition)
                .or(self.get(k, StocksApproach::EndToEnd))
            {
                if k <= 100 {
                    let kf = k as f64;
                    out.push(Check::new(
                        format!("stocks k={k} init noise ratio in [k/2, 2k]"),
                        (kf / 2.0..=2.0 * kf).contains(&r.init_noise_ratio),
                        format!("ratio {:.3}", r.init_noise_ratio),
                    ));
                }
            }
            if let Some(ratio) = self.speedup_ratio(k) {
                let at = |a| self.get(k, a).and_then(|r| r.iterations_to_threshold);
                out.push(Check::new(
                    format!("stocks k={k} decomposition reaches threshold in <= 0.5x iterations"),
                    ratio <= 0.5,
                    format!(
                        "decomposition at {:?}, end_to_end at {:?}, ratio {ratio:.3}",
                        at(StocksApproach::Decomposition),
                        at(StocksApproach::EndToEnd)
                    ),
                ));
            }
        }
        out
    }

    pub(crate) fn write_extras(&self, dir: &Path) -> Result<()> {
        let records: Vec<&RunRecord> = self.runs.iter().map(|r| &r.record).collect();
        write_svg(
            dir.join("loss.svg"),
            &comparison_plot("stocks", "expected loss", &records),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_head_loss() {
        let net = simplex_head(5, 4, 0).unwrap();
        let mut zero = net.clone();
        zero.set_params(vec![0.0; net.param_count()]).unwrap();
        let task = StockTask::new(5, 4, 1).unwrap();
        let mut r = rng::seeded(2);
        let s: Vec<_> = (0..10).map(|_| task.sample(&mut r)).collect();
        assert!((expected_loss(&zero, &s).unwrap() + 0.25).abs() < 1e-15);
    }

    #[test]
    fn short_runs() {
        let mut spec = StocksSpec::default();
        spec.d = 20;
        spec.ks = vec![4];
        spec.train.iterations = 30;
        spec.train.eval_every = 10;
        spec.eval_size = 40;
        spec.noise_samples = 10;
        let out = run_stocks(&spec, 1).unwrap();
        assert_eq!(out.runs.len(), 2);
        let e = out.get(4, StocksApproach::EndToEnd).unwrap();
        let d = out.get(4, StocksApproach::Decomposition).unwrap();
        assert_eq!(e.init_noise_ratio, d.init_noise_ratio);
    }
}
