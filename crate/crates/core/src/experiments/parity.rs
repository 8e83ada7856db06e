use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{comparison_plot, par_map, write_svg, Check};
use crate::closedform::build_parity_network;
use crate::datagen::{gen_parity, parity_label, parity_tensors, random_bits};
use crate::engine::{LossKind, Network, Tensor};
use crate::error::{Error, Result};
use crate::models::parity_learner;
use crate::rng;
use crate::trainers::{train_sgd, RunRecord, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParitySpec {
    pub seed: u64,
    pub dims: Vec<usize>,
    pub train: TrainConfig,
    pub eval_size: usize,
}

impl Default for ParitySpec {
    fn default() -> Self {
        let mut train = TrainConfig::new(10_000, 32, 0.1, 0);
        train.eval_every = 100;
        Self {
            seed: 0,
            dims: vec![5, 10, 20, 30],
            train,
            eval_size: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParityRun {
    pub d: usize,
    pub v_star: Vec<u8>,
    pub record: RunRecord,
    /// Held-out accuracy of the hand-built exact network.
    pub baseline_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParityOutcome {
    pub runs: Vec<ParityRun>,
}

/// Fraction of samples where `pred > 0` agrees with `y > 0`.
pub fn sign_accuracy(pred: &[f64], y: &[f64]) -> f64 {
    let hits = pred
        .iter()
        .zip(y)
        .filter(|(p, y)| (**p > 0.0) == (**y > 0.0))
        .count();
    hits as f64 / y.len().max(1) as f64
}

fn accuracy(net: &Network, x: &Tensor, y: &Tensor) -> Result<f64> {
    Ok(sign_accuracy(net.predict(x)?.data(), y.data()))
}

fn run_one(spec: &ParitySpec, d: usize) -> Result<ParityRun> {
    if d < 1 {
        return Err(Error::invalid("parity dimension must be at least 1"));
    }
    let seed = rng::derive_seed(spec.seed, d as u64);
    let v_star = random_bits(d, &mut rng::substream(seed, 0));
    let mut config = spec.train.clone();
    config.seed = seed;
    let eval = gen_parity(d, &v_star, spec.eval_size, config.eval_seed())?;
    let (ex, ey) = parity_tensors(&eval)?;

    let mut data = rng::substream(seed, 1);
    let v = v_star.clone();
    let mut source = move |b: usize| {
        let mut xs = Vec::with_capacity(b * d);
        let mut ys = Vec::with_capacity(b);
        for _ in 0..b {
            let x = random_bits(d, &mut data);
            ys.push(parity_label(&x, &v) as f64);
            xs.extend(x.iter().map(|&bit| bit as f64));
        }
        Ok((Tensor::new(vec![b, d], xs)?, Tensor::new(vec![b, 1], ys)?))
    };
    let mut net = parity_learner(d, rng::derive_seed(seed, 2))?;
    let record = train_sgd(
        &mut net,
        &mut source,
        LossKind::Hinge,
        &config,
        &format!("d{d}"),
        |n, _| accuracy(n, &ex, &ey),
    )?;
    let baseline = build_parity_network(d, &v_star)?;
    Ok(ParityRun {
        d,
        v_star,
        record,
        baseline_accuracy: accuracy(&baseline, &ex, &ey)?,
    })
}

/// One hinge-loss SGD run per dimension with a fresh `v*`.
pub fn run_parity(spec: &ParitySpec, jobs: usize) -> Result<ParityOutcome> {
    let runs = par_map(jobs, spec.dims.clone(), |d| run_one(spec, d))?;
    Ok(ParityOutcome { runs })
}

impl ParityOutcome {
    pub fn final_accuracy(&self, d: usize) -> Option<f64> {
        self.runs
            .iter()
            .find(|r| r.d == d)
            .and_then(|r| r.record.last())
            .map(|p| p.eval_metric)
    }

    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        for r in &self.runs {
            let acc = r.record.last().map(|p| p.eval_metric).unwrap_or(f64::NAN);
            let iters = r.record.config.iterations;
            if r.d <= 5 {
                out.push(Check::new(
                    format!("parity d={} accuracy >= 0.95", r.d),
                    acc >= 0.95,
                    format!("accuracy {acc:.4} after {iters} iterations"),
                ));
            }
            if r.d >= 30 {
                out.push(Check::new(
                    format!("parity d={} accuracy in [0.45, 0.55]", r.d),
                    (0.45..=0.55).contains(&acc),
                    format!("accuracy {acc:.4} after {iters} iterations"),
                ));
            }
            out.push(Check::new(
                format!("parity d={} exact network baseline", r.d),
                r.baseline_accuracy == 1.0,
                format!("accuracy {}", r.baseline_accuracy),
            ));
        }
        out
    }

    pub(crate) fn write_extras(&self, dir: &Path) -> Result<()> {
        let records: Vec<&RunRecord> = self.runs.iter().map(|r| &r.record).collect();
        write_svg(
            dir.join("accuracy.svg"),
            &comparison_plot("parity", "held-out accuracy", &records),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_is_reproducible() {
        let mut spec = ParitySpec::default();
        spec.dims = vec![3];
        spec.train.iterations = 200;
        spec.train.eval_every = 50;
        spec.eval_size = 64;
        let a = run_parity(&spec, 1).unwrap();
        let b = run_parity(&spec, 2).unwrap();
        assert_eq!(a.runs[0].record.series, b.runs[0].record.series);
        assert_eq!(a.runs[0].baseline_accuracy, 1.0);
        assert_eq!(a.runs[0].record.series.len(), 4);
    }

    #[test]
    fn accuracy_counts_signs() {
        assert_eq!(
            sign_accuracy(&[0.3, -2.0, 0.0], &[1.0, 1.0, -1.0]),
            2.0 / 3.0
        );
    }
}
