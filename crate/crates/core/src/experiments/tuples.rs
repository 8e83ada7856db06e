use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{comparison_plot, par_map, parity::sign_accuracy, write_svg, Check};
use crate::datagen::{sample_tuple, TupleSample};
use crate::engine::{loss_eval, sgd_step_in_place, sigmoid, LossKind, Network, Tensor};
use crate::error::{Error, Result};
use crate::models::{lenet_scorer, parity_learner, ImageScale};
use crate::rng;
use crate::stats::norm_sq;
use crate::trainers::{train_loop, RunRecord, StepOutcome, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    EndToEnd,
    Decomposition,
}

impl Approach {
    pub fn tag(self) -> &'static str {
        match self {
            Approach::EndToEnd => "end_to_end",
            Approach::Decomposition => "decomposition",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuplesSpec {
    pub seed: u64,
    pub ks: Vec<usize>,
    pub approaches: Vec<Approach>,
    pub scale: ImageScale,
    pub end_to_end: TrainConfig,
    /// Total budget of both decomposition stages.
    pub decomposition: TrainConfig,
    /// Share of the decomposition budget spent on the image scorer.
    pub stage1_fraction: f64,
    pub eval_size: usize,
}

impl Default for TuplesSpec {
    fn default() -> Self {
        let mut e2e = TrainConfig::new(20_000, 32, 0.1, 0);
        e2e.eval_every = 250;
        let mut dec = TrainConfig::new(2_500, 32, 0.1, 0);
        dec.eval_every = 250;
        Self {
            seed: 0,
            ks: vec![1, 2, 3, 4],
            approaches: vec![Approach::EndToEnd, Approach::Decomposition],
            scale: ImageScale::Full,
            end_to_end: e2e,
            decomposition: dec,
            stage1_fraction: 0.5,
            eval_size: 1000,
        }
    }
}

impl TuplesSpec {
    /// The reduced 16x16 configuration.
    pub fn small() -> Self {
        Self {
            scale: ImageScale::Small,
            ..Self::default()
        }
    }

    pub fn config(&self, approach: Approach) -> &TrainConfig {
        match approach {
            Approach::EndToEnd => &self.end_to_end,
            Approach::Decomposition => &self.decomposition,
        }
    }
}

/// Scorer `N1` applied to each image, sigmoid, then the tuple network `N2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TupleModel {
    pub n1: Network,
    pub n2: Network,
    pub k: usize,
}

/// Images of a batch of tuples as `[batch * k, 1, s, s]`.
pub fn tuple_images(tuples: &[TupleSample]) -> Result<Tensor> {
    let first = tuples
        .first()
        .and_then(|t| t.images.first())
        .ok_or_else(|| Error::invalid("empty tuple batch"))?;
    let s = first.size;
    let count: usize = tuples.iter().map(|t| t.images.len()).sum();
    let data = tuples
        .iter()
        .flat_map(|t| t.images.iter().flat_map(|im| im.as_f64()))
        .collect();
    Tensor::new(vec![count, 1, s, s], data)
}

fn targets(tuples: &[TupleSample]) -> Result<Tensor> {
    Tensor::new(
        vec![tuples.len(), 1],
        tuples.iter().map(|t| t.y_tilde as f64).collect(),
    )
}

fn part_targets(tuples: &[TupleSample]) -> Result<Tensor> {
    let y: Vec<f64> = tuples
        .iter()
        .flat_map(|t| t.y_parts.iter().map(|&y| y as f64))
        .collect();
    Tensor::new(vec![y.len(), 1], y)
}

impl TupleModel {
    pub fn new(k: usize, scale: ImageScale, seed: u64) -> Result<Self> {
        Ok(Self {
            n1: lenet_scorer(scale, rng::derive_seed(seed, 2))?,
            n2: parity_learner(k, rng::derive_seed(seed, 3))?,
            k,
        })
    }

    /// Sigmoid-squashed scores `[batch, k]` for `[batch * k, ...]` images.
    fn squashed(&self, scores: &Tensor) -> Result<Tensor> {
        let b = scores.len() / self.k;
        Tensor::new(
            vec![b, self.k],
            scores.data().iter().map(|&s| sigmoid(s)).collect(),
        )
    }

    /// Tuple scores `[batch, 1]`.
    pub fn predict(&self, images: &Tensor) -> Result<Tensor> {
        let s = self.n1.predict(images)?;
        self.n2.predict(&self.squashed(&s)?)
    }

    /// One SGD step of both networks on the tuple hinge loss.
    fn end_to_end_step(&mut self, images: &Tensor, y: &Tensor, lr: f64) -> Result<StepOutcome> {
        let (scores, c1) = self.n1.forward(images)?;
        let squashed = self.squashed(&scores)?;
        let (out, c2) = self.n2.forward(&squashed)?;
        let (loss, up) = loss_eval(LossKind::Hinge, &out, y)?;
        let g2 = self.n2.backward(&c2, &up)?;
        let up1: Vec<f64> = g2
            .input
            .iter()
            .zip(squashed.data())
            .map(|(g, s)| g * s * (1.0 - s))
            .collect();
        let g1 = self
            .n1
            .backward(&c1, &Tensor::new(scores.shape().to_vec(), up1)?)?;
        sgd_step_in_place(self.n1.params_mut(), &g1.params, lr)?;
        sgd_step_in_place(self.n2.params_mut(), &g2.params, lr)?;
        Ok(StepOutcome {
            loss,
            grad_norm: (norm_sq(&g1.params) + norm_sq(&g2.params)).sqrt(),
        })
    }

    /// Trains `N1` alone on the per-image labels.
    fn scorer_step(&mut self, images: &Tensor, parts: &Tensor, lr: f64) -> Result<StepOutcome> {
        let (loss, g) = self.n1.loss_and_grad(images, parts, LossKind::Hinge)?;
        sgd_step_in_place(self.n1.params_mut(), &g, lr)?;
        Ok(StepOutcome {
            loss,
            grad_norm: norm_sq(&g).sqrt(),
        })
    }

    /// Trains `N2` on the frozen scorer's squashed outputs.
    fn head_step(&mut self, images: &Tensor, y: &Tensor, lr: f64) -> Result<StepOutcome> {
        let squashed = self.squashed(&self.n1.predict(images)?)?;
        let (loss, g) = self.n2.loss_and_grad(&squashed, y, LossKind::Hinge)?;
        sgd_step_in_place(self.n2.params_mut(), &g, lr)?;
        Ok(StepOutcome {
            loss,
            grad_norm: norm_sq(&g).sqrt(),
        })
    }

    pub fn params_digest(&self) -> String {
        let all: Vec<f64> = self
            .n1
            .params()
            .iter()
            .chain(self.n2.params())
            .copied()
            .collect();
        crate::engine::params_digest(&all)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuplesRun {
    pub k: usize,
    pub approach: Approach,
    pub record: RunRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuplesOutcome {
    pub scale: ImageScale,
    pub runs: Vec<TuplesRun>,
}

fn run_one(spec: &TuplesSpec, k: usize, approach: Approach) -> Result<TuplesRun> {
    if k == 0 {
        return Err(Error::invalid("tuple size must be at least 1"));
    }
    let size = spec.scale.image_size();
    // Both approaches share data and init seeds for a given k.
    let seed = rng::derive_seed(spec.seed, k as u64);
    let mut config = spec.config(approach).clone();
    config.seed = seed;
    let mut eval_rng = rng::seeded(config.eval_seed());
    let eval: Vec<TupleSample> = (0..spec.eval_size)
        .map(|_| sample_tuple(k, size, &mut eval_rng))
        .collect::<Result<_>>()?;
    let (ex, ey) = (tuple_images(&eval)?, targets(&eval)?);

    let mut data = rng::substream(seed, 1);
    let lr = config.learning_rate;
    let batch = config.batch_size;
    let stage1 = (config.iterations as f64 * spec.stage1_fraction).round() as usize;
    let mut model = TupleModel::new(k, spec.scale, seed)?;
    let mut record = train_loop(
        &mut model,
        &format!("{}_k{k}", approach.tag()),
        &config,
        |m, t| {
            let tuples: Vec<TupleSample> = (0..batch)
                .map(|_| sample_tuple(k, size, &mut data))
                .collect::<Result<_>>()?;
            let images = tuple_images(&tuples)?;
            match approach {
                Approach::EndToEnd => m.end_to_end_step(&images, &targets(&tuples)?, lr),
                Approach::Decomposition if t <= stage1 => {
                    m.scorer_step(&images, &part_targets(&tuples)?, lr)
                }
                Approach::Decomposition => m.head_step(&images, &targets(&tuples)?, lr),
            }
        },
        |m, _| Ok(sign_accuracy(m.predict(&ex)?.data(), ey.data())),
        |m| m.params_digest(),
    )?;
    let parts = part_targets(&eval)?;
    let scorer_acc = sign_accuracy(model.n1.predict(&ex)?.data(), parts.data());
    record.metrics.insert("scorer_accuracy".into(), scorer_acc);
    Ok(TuplesRun {
        k,
        approach,
        record,
    })
}

/// Trains every `(k, approach)` pair; evaluation is primary-objective
/// accuracy on held-out tuples.
pub fn run_tuples(spec: &TuplesSpec, jobs: usize) -> Result<TuplesOutcome> {
    let mut items = Vec::new();
    for &k in &spec.ks {
        for &a in &spec.approaches {
            items.push((k, a));
        }
    }
    let runs = par_map(jobs, items, |(k, a)| run_one(spec, k, a))?;
    Ok(TuplesOutcome {
        scale: spec.scale,
        runs,
    })
}

impl TuplesOutcome {
    pub fn get(&self, k: usize, approach: Approach) -> Option<&TuplesRun> {
        self.runs
            .iter()
            .find(|r| r.k == k && r.approach == approach)
    }

    /// Best held-out accuracy reached within `iterations`.
    pub fn accuracy_within(&self, k: usize, approach: Approach, iterations: usize) -> Option<f64> {
        self.get(k, approach).map(|r| {
            r.record
                .series
                .iter()
                .filter(|p| p.iteration <= iterations)
                .map(|p| p.eval_metric)
                .fold(f64::NEG_INFINITY, f64::max)
        })
    }

    pub fn final_accuracy(&self, k: usize, approach: Approach) -> Option<f64> {
        self.get(k, approach)
            .and_then(|r| r.record.last())
            .map(|p| p.eval_metric)
    }

    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        for r in &self.runs {
            let acc = self.final_accuracy(r.k, r.approach).unwrap_or(f64::NAN);
            match (r.approach, r.k, self.scale) {
                (_, 1..=3, ImageScale::Full) if r.approach == Approach::Decomposition => {
                    let best = self
                        .accuracy_within(r.k, r.approach, 2500)
                        .unwrap_or(f64::NAN);
                    out.push(Check::new(
                        format!("tuples decomposition k={} >= 0.9 within 2500", r.k),
                        best >= 0.9,
                        format!("best accuracy {best:.4}"),
                    ));
                }
                (Approach::EndToEnd, 1 | 2, ImageScale::Full) => {
                    let best = self
                        .accuracy_within(r.k, r.approach, 20_000)
                        .unwrap_or(f64::NAN);
                    out.push(Check::new(
                        format!("tuples end_to_end k={} >= 0.9 within 20000", r.k),
                        best >= 0.9,
                        format!("best accuracy {best:.4}"),
                    ));
                }
                (Approach::EndToEnd, 3, ImageScale::Full) => out.push(Check::new(
                    "tuples end_to_end k=3 <= 0.65",
                    acc <= 0.65,
                    format!("final accuracy {acc:.4}"),
                )),
                _ => {}
            }
        }
        if let (Some(d), Some(e)) = (
            self.final_accuracy(3, Approach::Decomposition),
            self.final_accuracy(3, Approach::EndToEnd),
        ) {
            out.push(Check::new(
                "tuples k=3 accuracy gap >= 0.25",
                d - e >= 0.25,
                format!("decomposition {d:.4}, end_to_end {e:.4}"),
            ));
        }
        out
    }

    pub(crate) fn write_extras(&self, dir: &Path) -> Result<()> {
        let records: Vec<&RunRecord> = self.runs.iter().map(|r| &r.record).collect();
        write_svg(
            dir.join("accuracy.svg"),
            &comparison_plot("tuples", "primary accuracy", &records),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composed_gradient_matches_finite_differences() {
        let mut model = TupleModel::new(2, ImageScale::Small, 5).unwrap();
        let mut r = rng::seeded(1);
        let tuples: Vec<_> = (0..3)
            .map(|_| sample_tuple(2, 16, &mut r).unwrap())
            .collect();
        let images = tuple_images(&tuples).unwrap();
        let y = targets(&tuples).unwrap();
        let loss_of = |m: &TupleModel| {
            let out = m.predict(&images).unwrap();
            loss_eval(LossKind::Square, &out, &y).unwrap().0
        };
        // Analytic gradient of the square loss through the composition.
        let (scores, c1) = model.n1.forward(&images).unwrap();
        let sq = model.squashed(&scores).unwrap();
        let (out, c2) = model.n2.forward(&sq).unwrap();
        let (_, up) = loss_eval(LossKind::Square, &out, &y).unwrap();
        let g2 = model.n2.backward(&c2, &up).unwrap();
        let up1: Vec<f64> = g2
            .input
            .iter()
            .zip(sq.data())
            .map(|(g, s)| g * s * (1.0 - s))
            .collect();
        let g1 = model
            .n1
            .backward(&c1, &Tensor::new(scores.shape().to_vec(), up1).unwrap())
            .unwrap();
        let base = model.n1.params().to_vec();
        for &i in &[0usize, 7, base.len() - 1] {
            let h = 1e-6;
            model.n1.params_mut()[i] = base[i] + h;
            let up = loss_of(&model);
            model.n1.params_mut()[i] = base[i] - h;
            let down = loss_of(&model);
            model.n1.params_mut()[i] = base[i];
            let fd = (up - down) / (2.0 * h);
            assert!(
                (fd - g1.params[i]).abs() <= 1e-6 * fd.abs().max(1e-3),
                "{fd} vs {}",
                g1.params[i]
            );
        }
    }

    #[test]
    fn shared_seeds_across_approaches() {
        let mut spec = TuplesSpec::small();
        spec.ks = vec![1];
        spec.end_to_end.iterations = 4;
        spec.end_to_end.eval_every = 2;
        spec.decomposition.iterations = 4;
        spec.decomposition.eval_every = 2;
        spec.eval_size = 8;
        let out = run_tuples(&spec, 1).unwrap();
        assert_eq!(out.runs.len(), 2);
        assert!(out.runs.iter().all(|r| r.record.series.len() == 2));
    }
}
