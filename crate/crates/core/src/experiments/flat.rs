use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{comparison_plot, par_map, write_svg, Check};
use crate::datagen::{default_levels, gen_step_task, step_class, StepTask};
use crate::engine::{InitScheme, LossKind, Network, NetworkBuilder, Tensor};
use crate::error::{Error, Result};
use crate::plot::{Plot, Series};
use crate::rng::{self, Rng};
use crate::stats::norm_sq;
use crate::trainers::{
    forward_only_mse, train_forward_only, train_loop, train_sgd, Link, RunRecord, StepOutcome,
    TrainConfig, EVAL_SEED_OFFSET,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlatVariant {
    Approx,
    EndToEnd,
    Multiclass,
    ForwardOnly,
}

impl FlatVariant {
    pub fn tag(self) -> &'static str {
        match self {
            FlatVariant::Approx => "approx",
            FlatVariant::EndToEnd => "end_to_end",
            FlatVariant::Multiclass => "multiclass",
            FlatVariant::ForwardOnly => "forward_only",
        }
    }

    pub const ALL: [FlatVariant; 4] = [
        FlatVariant::Approx,
        FlatVariant::EndToEnd,
        FlatVariant::Multiclass,
        FlatVariant::ForwardOnly,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlatTeacher {
    /// `v*` uniform on the sphere of radius `norm`, `b*` at the middle of
    /// the levels.
    Random {
        norm: f64,
    },
    Fixed {
        v: Vec<f64>,
        b: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatSpec {
    pub seed: u64,
    pub variants: Vec<FlatVariant>,
    pub d: usize,
    pub z: Vec<f64>,
    /// Sharpness `c` of the sigmoid-sum surrogate.
    pub smooth_c: f64,
    pub teacher: FlatTeacher,
    pub approx: TrainConfig,
    pub end_to_end: TrainConfig,
    pub multiclass: TrainConfig,
    pub forward_only: TrainConfig,
    /// Bias inits of the approx variant, in units of the std of `v*^T x`,
    /// relative to the middle level.
    pub bias_offsets: Vec<f64>,
    /// Projection radius as a multiple of `||v*||` when not set explicitly.
    pub projection_scale: f64,
    pub eval_size: usize,
}

impl Default for FlatSpec {
    fn default() -> Self {
        let cfg = |iterations| {
            let mut c = TrainConfig::new(iterations, 32, 0.05, 0);
            c.eval_every = 100;
            c
        };
        Self {
            seed: 0,
            variants: FlatVariant::ALL.to_vec(),
            d: 10,
            z: default_levels(),
            smooth_c: 4.0,
            teacher: FlatTeacher::Random { norm: 10.0 },
            approx: cfg(10_000),
            end_to_end: TrainConfig {
                learning_rate: 0.01,
                ..cfg(10_000)
            },
            multiclass: cfg(10_000),
            forward_only: cfg(5_000),
            bias_offsets: vec![-5.0, 0.0, 5.0],
            projection_scale: 10.0,
            eval_size: 2000,
        }
    }
}

impl FlatSpec {
    pub fn config(&self, v: FlatVariant) -> &TrainConfig {
        match v {
            FlatVariant::Approx => &self.approx,
            FlatVariant::EndToEnd => &self.end_to_end,
            FlatVariant::Multiclass => &self.multiclass,
            FlatVariant::ForwardOnly => &self.forward_only,
        }
    }

    pub fn config_mut(&mut self, v: FlatVariant) -> &mut TrainConfig {
        match v {
            FlatVariant::Approx => &mut self.approx,
            FlatVariant::EndToEnd => &mut self.end_to_end,
            FlatVariant::Multiclass => &mut self.multiclass,
            FlatVariant::ForwardOnly => &mut self.forward_only,
        }
    }

    pub fn task(&self) -> Result<StepTask> {
        let mid = 0.5 * (self.z[0] + self.z[self.z.len() - 1]);
        match &self.teacher {
            FlatTeacher::Random { norm } => {
                let base = gen_step_task(self.d, &self.z, 0, rng::derive_seed(self.seed, 0))?;
                let v = base.v_star.iter().map(|x| x * norm).collect();
                StepTask::with_teacher(v, mid, self.z.clone(), 0, 0)
            }
            FlatTeacher::Fixed { v, b } => {
                if v.len() != self.d {
                    return Err(Error::invalid("fixed teacher dimension differs from d"));
                }
                StepTask::with_teacher(v.clone(), *b, self.z.clone(), 0, 0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatRun {
    pub variant: FlatVariant,
    /// Bias init offset, for approx runs.
    pub bias_offset: Option<f64>,
    pub record: RunRecord,
    /// `(v*^T x + b*, prediction)` on the first eval samples.
    pub response: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatOutcome {
    pub task: StepTask,
    pub runs: Vec<FlatRun>,
}

/// Share of misclassified samples whose predicted class is adjacent to
/// the true one; 1 when there are no errors.
pub fn adjacent_error_share(pred: &[usize], truth: &[usize]) -> f64 {
    let (mut errors, mut adjacent) = (0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        if p != t {
            errors += 1;
            if p.abs_diff(t) == 1 {
                adjacent += 1;
            }
        }
    }
    if errors == 0 {
        1.0
    } else {
        adjacent as f64 / errors as f64
    }
}

struct EvalSet {
    x: Tensor,
    y: Vec<f64>,
    r_star: Vec<f64>,
}

const RESPONSE_POINTS: usize = 400;

fn draw_batch(task: &StepTask, b: usize, rng: &mut Rng) -> Result<(Tensor, Vec<f64>)> {
    let d = task.d();
    let mut xs = Vec::with_capacity(b * d);
    let mut ys = Vec::with_capacity(b);
    for (x, y) in task.draw(b, rng) {
        xs.extend(x);
        ys.push(y);
    }
    Ok((Tensor::new(vec![b, d], xs)?, ys))
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter()
        .zip(y)
        .map(|(p, y)| (p - y).powi(2))
        .sum::<f64>()
        / y.len().max(1) as f64
}

fn response(ev: &EvalSet, pred: &[f64]) -> Vec<(f64, f64)> {
    ev.r_star
        .iter()
        .zip(pred)
        .take(RESPONSE_POINTS)
        .map(|(&r, &p)| (r, p))
        .collect()
}

struct Ctx<'a> {
    spec: &'a FlatSpec,
    task: &'a StepTask,
    eval: EvalSet,
    mid: f64,
}

impl Ctx<'_> {
    fn config(&self, v: FlatVariant) -> TrainConfig {
        let mut c = self.spec.config(v).clone();
        c.seed = self.spec.seed;
        c
    }

    /// Training data stream shared by every variant.
    fn stream(&self) -> Rng {
        rng::substream(self.spec.seed, 1)
    }
}

fn run_approx(ctx: &Ctx, offset: f64) -> Result<FlatRun> {
    let config = ctx.config(FlatVariant::Approx);
    let d = ctx.task.d();
    let link = Link::SmoothStep {
        z: ctx.spec.z.clone(),
        c: ctx.spec.smooth_c,
    };
    let sigma = norm_sq(&ctx.task.v_star).sqrt();
    let mut params = vec![0.0; d + 1];
    params[d] = ctx.mid + offset * sigma;
    let mut data = ctx.stream();
    let lr = config.learning_rate;
    let run_id = if offset == 0.0 {
        "approx".to_string()
    } else {
        format!("approx_bias{offset:+}")
    };
    let (ex, ey) = (&ctx.eval.x, &ctx.eval.y);
    let mut record = train_loop(
        &mut params,
        &run_id,
        &config,
        |p, _| {
            let (x, y) = draw_batch(ctx.task, config.batch_size, &mut data)?;
            let n = y.len() as f64;
            let mut g = vec![0.0; d + 1];
            let mut loss = 0.0;
            for (i, &yi) in y.iter().enumerate() {
                let xi = x.row(i);
                let r = xi.iter().zip(&p[..d]).map(|(a, b)| a * b).sum::<f64>() + p[d];
                let e = link.value(r) - yi;
                loss += 0.5 * e * e / n;
                let s = e * link.derivative(r) / n;
                for (gj, xj) in g.iter_mut().zip(xi) {
                    *gj += s * xj;
                }
                g[d] += s;
            }
            for (pj, gj) in p.iter_mut().zip(&g) {
                *pj -= lr * gj;
            }
            Ok(StepOutcome {
                loss,
                grad_norm: norm_sq(&g).sqrt(),
            })
        },
        |p, _| forward_only_mse(&p[..d], p[d], &link, ex, ey),
        |p| crate::engine::params_digest(p),
    )?;
    let hard = Link::Step {
        z: ctx.spec.z.clone(),
    };
    record.metrics.insert(
        "mse_hard".into(),
        forward_only_mse(&params[..d], params[d], &hard, ex, ey)?,
    );
    let pred: Vec<f64> = (0..ey.len())
        .map(|i| {
            let r = ex
                .row(i)
                .iter()
                .zip(&params[..d])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + params[d];
            link.value(r)
        })
        .collect();
    Ok(FlatRun {
        variant: FlatVariant::Approx,
        bias_offset: Some(offset),
        record,
        response: response(&ctx.eval, &pred),
    })
}

/// Three ReLU layers of width 100 and a scalar output.
pub fn flat_regressor(d: usize, seed: u64) -> Result<Network> {
    NetworkBuilder::new(vec![d])
        .dense(100)
        .relu()
        .dense(100)
        .relu()
        .dense(100)
        .relu()
        .dense(1)
        .build(InitScheme::UniformFanIn, seed)
}

/// Two ReLU layers of width 100 and one logit per level.
pub fn flat_classifier(d: usize, classes: usize, seed: u64) -> Result<Network> {
    NetworkBuilder::new(vec![d])
        .dense(100)
        .relu()
        .dense(100)
        .relu()
        .dense(classes)
        .build(InitScheme::UniformFanIn, seed)
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

fn run_network(ctx: &Ctx, variant: FlatVariant) -> Result<FlatRun> {
    let config = ctx.config(variant);
    let z = &ctx.spec.z;
    let d = ctx.task.d();
    let classify = variant == FlatVariant::Multiclass;
    let init_seed = rng::derive_seed(ctx.spec.seed, 2);
    let mut net = if classify {
        flat_classifier(d, z.len(), init_seed)?
    } else {
        flat_regressor(d, init_seed)?
    };
    let mut data = ctx.stream();
    let mut source = |b: usize| {
        let (x, y) = draw_batch(ctx.task, b, &mut data)?;
        let t = if classify {
            y.iter()
                .map(|&v| z.partition_point(|&zi| zi < v) as f64)
                .collect()
        } else {
            y
        };
        let shape = if classify { vec![b] } else { vec![b, 1] };
        Ok((x, Tensor::new(shape, t)?))
    };
    let predict = |net: &Network| -> Result<Vec<f64>> {
        let out = net.predict(&ctx.eval.x)?;
        Ok(if classify {
            (0..out.batch_size())
                .map(|i| z[argmax(out.row(i))])
                .collect()
        } else {
            out.into_data()
        })
    };
    let loss = if classify {
        LossKind::MulticlassLogistic
    } else {
        LossKind::Square
    };
    let mut record = train_sgd(
        &mut net,
        &mut source,
        loss,
        &config,
        variant.tag(),
        |n, _| Ok(mse(&predict(n)?, &ctx.eval.y)),
    )?;
    let pred = match predict(&net) {
        Err(Error::NonFinite(_)) => vec![f64::NAN; ctx.eval.y.len()],
        other => other?,
    };
    if classify {
        let truth: Vec<usize> = ctx.eval.r_star.iter().map(|&r| step_class(r, z)).collect();
        let guess: Vec<usize> = pred
            .iter()
            .map(|&p| z.partition_point(|&zi| zi < p))
            .collect();
        let correct = truth.iter().zip(&guess).filter(|(a, b)| a == b).count();
        record.metrics.insert(
            "adjacent_error_share".into(),
            adjacent_error_share(&guess, &truth),
        );
        record.metrics.insert(
            "class_accuracy".into(),
            correct as f64 / truth.len().max(1) as f64,
        );
    }
    Ok(FlatRun {
        variant,
        bias_offset: None,
        record,
        response: response(&ctx.eval, &pred),
    })
}

fn run_forward_only(ctx: &Ctx) -> Result<FlatRun> {
    let mut config = ctx.config(FlatVariant::ForwardOnly);
    let v = &ctx.task.v_star;
    let vnorm = norm_sq(v).sqrt();
    if config.projection_radius.is_none() {
        let b = ctx.spec.projection_scale * vnorm;
        config.projection_radius = Some(if b > 0.0 {
            b
        } else {
            ctx.spec.projection_scale
        });
    }
    let link = Link::Step {
        z: ctx.spec.z.clone(),
    };
    let mut data = ctx.stream();
    let mut source = |b: usize| {
        let (x, y) = draw_batch(ctx.task, b, &mut data)?;
        Ok((x, Tensor::new(vec![b, 1], y)?))
    };
    let d = ctx.task.d();
    let run = train_forward_only(
        &vec![0.0; d],
        ctx.mid,
        &mut source,
        &link,
        &config,
        Some(v),
        (&ctx.eval.x, &ctx.eval.y),
        FlatVariant::ForwardOnly.tag(),
    )?;
    let pred: Vec<f64> = (0..ctx.eval.y.len())
        .map(|i| {
            let r = ctx
                .eval
                .x
                .row(i)
                .iter()
                .zip(&run.w)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + run.b;
            link.value(r)
        })
        .collect();
    Ok(FlatRun {
        variant: FlatVariant::ForwardOnly,
        bias_offset: None,
        record: run.record,
        response: response(&ctx.eval, &pred),
    })
}

/// Runs the requested variants on one shared teacher and data stream.
pub fn run_flat(spec: &FlatSpec, jobs: usize) -> Result<FlatOutcome> {
    let task = spec.task()?;
    let mut eval_rng = rng::seeded(spec.seed.wrapping_add(EVAL_SEED_OFFSET));
    let samples = task.draw(spec.eval_size, &mut eval_rng);
    let r_star = samples
        .iter()
        .map(|(x, _)| task.b_star + x.iter().zip(&task.v_star).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let eval = EvalSet {
        x: Tensor::new(
            vec![samples.len(), task.d()],
            samples
                .iter()
                .flat_map(|(x, _)| x.iter().copied())
                .collect(),
        )?,
        y: samples.iter().map(|(_, y)| *y).collect(),
        r_star,
    };
    let ctx = Ctx {
        spec,
        task: &task,
        eval,
        mid: 0.5 * (spec.z[0] + spec.z[spec.z.len() - 1]),
    };
    let mut items: Vec<(FlatVariant, Option<f64>)> = Vec::new();
    for &v in &spec.variants {
        if v == FlatVariant::Approx {
            let mut offsets = spec.bias_offsets.clone();
            if !offsets.contains(&0.0) {
                offsets.insert(0, 0.0);
            }
            items.extend(offsets.into_iter().map(|o| (v, Some(o))));
        } else {
            items.push((v, None));
        }
    }
    let runs = par_map(jobs, items, |(v, offset)| match v {
        FlatVariant::Approx => run_approx(&ctx, offset.unwrap_or(0.0)),
        FlatVariant::ForwardOnly => run_forward_only(&ctx),
        _ => run_network(&ctx, v),
    })?;
    Ok(FlatOutcome {
        task: task.clone(),
        runs,
    })
}

impl FlatOutcome {
    /// The headline run of a variant (zero bias offset for approx).
    pub fn get(&self, v: FlatVariant) -> Option<&FlatRun> {
        self.runs
            .iter()
            .find(|r| r.variant == v && r.bias_offset.unwrap_or(0.0) == 0.0)
    }

    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        if let (Some(f), Some(a)) = (
            self.get(FlatVariant::ForwardOnly),
            self.get(FlatVariant::Approx),
        ) {
            let (ef, ea) = (f.record.eval_at(5000), a.record.eval_at(10_000));
            out.push(Check::new(
                "forward_only MSE at 5000 <= 0.1x approx MSE at 10000",
                matches!((ef, ea), (Some(x), Some(y)) if x <= 0.1 * y),
                format!("forward_only {ef:?}, approx {ea:?}"),
            ));
        }
        if let Some(m) = self.get(FlatVariant::Multiclass) {
            let share = m.record.metric("adjacent_error_share").unwrap_or(f64::NAN);
            out.push(Check::new(
                "multiclass adjacent-class error share >= 0.8",
                share >= 0.8,
                format!("share {share:.4}"),
            ));
        }
        for r in self
            .runs
            .iter()
            .filter(|r| r.variant == FlatVariant::ForwardOnly)
        {
            let (n, a) = (
                r.record.metric("large_descents"),
                r.record.metric("descent_allowance"),
            );
            out.push(Check::new(
                "forward_only large-descent count within 1/(eta^2 c^2)",
                matches!((n, a), (Some(n), Some(a)) if n <= a),
                format!("count {n:?}, allowance {a:?}"),
            ));
        }
        out
    }

    pub(crate) fn write_extras(&self, dir: &Path) -> Result<()> {
        let records: Vec<&RunRecord> = self.runs.iter().map(|r| &r.record).collect();
        write_svg(
            dir.join("mse.svg"),
            &comparison_plot("flat", "eval MSE", &records),
        )?;
        let mut truth: Vec<(f64, f64)> = self
            .runs
            .first()
            .map(|r| {
                r.response
                    .iter()
                    .map(|&(r, _)| (r, crate::datagen::step_u(r, &self.task.z)))
                    .collect()
            })
            .unwrap_or_default();
        truth.sort_by(|a, b| a.0.total_cmp(&b.0));
        for r in &self.runs {
            let plot = Plot::new(&r.record.run_id, "v*.x + b*", "prediction")
                .with(Series::line("u", truth.clone()))
                .with(Series::scatter(&r.record.run_id, r.response.clone()));
            write_svg(dir.join(format!("response_{}.svg", r.record.run_id)), &plot)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacent_share() {
        assert_eq!(adjacent_error_share(&[1, 2, 5], &[1, 3, 3]), 0.5);
        assert_eq!(adjacent_error_share(&[1], &[1]), 1.0);
    }

    #[test]
    fn variants_share_task() {
        let mut spec = FlatSpec::default();
        for v in FlatVariant::ALL {
            let c = spec.config_mut(v);
            c.iterations = 20;
            c.eval_every = 10;
        }
        spec.eval_size = 50;
        let out = run_flat(&spec, 2).unwrap();
        assert_eq!(out.runs.len(), 6);
        assert!(out.runs.iter().all(|r| r.record.series.len() == 2));
        let fo = out.get(FlatVariant::ForwardOnly).unwrap();
        assert!(fo.record.metric("large_descents").is_some());
    }
}
