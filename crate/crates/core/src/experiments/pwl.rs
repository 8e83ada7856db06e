use std::path::Path;

use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

use super::{comparison_plot, par_map, write_svg, Check};
use crate::closedform::{estimate_c, spectral_norm, WhiteningOp};
use crate::datagen::{gen_pwl, PwlCurve};
use crate::engine::{InitScheme, LayerKind, LossKind, Network, NetworkBuilder, Padding1d, Tensor};
use crate::error::{Error, Result};
use crate::plot::{Plot, Series};
use crate::rng;
use crate::trainers::{
    conv_rows, filter_error, reconstruction_error, train_conditioned_conv, train_sgd, RunRecord,
    TrainConfig, EVAL_SEED_OFFSET,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PwlVariant {
    Linear,
    Conv,
    ConvCond,
    Autoencoder,
}

impl PwlVariant {
    pub fn tag(self) -> &'static str {
        match self {
            PwlVariant::Linear => "linear",
            PwlVariant::Conv => "conv",
            PwlVariant::ConvCond => "conv_cond",
            PwlVariant::Autoencoder => "autoencoder",
        }
    }

    pub const ALL: [PwlVariant; 4] = [
        PwlVariant::Linear,
        PwlVariant::Conv,
        PwlVariant::ConvCond,
        PwlVariant::Autoencoder,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwlSpec {
    pub seed: u64,
    pub variants: Vec<PwlVariant>,
    pub n: usize,
    pub kpieces: usize,
    pub linear: TrainConfig,
    pub conv: TrainConfig,
    pub conv_cond: TrainConfig,
    pub autoencoder: TrainConfig,
    /// Replace the linear and conv learning rates by the inverse of the
    /// largest curvature of their objective, estimated on the calibration
    /// curves.
    pub auto_rate: bool,
    pub snapshots: Vec<usize>,
    /// Eval curves drawn in the snapshots.
    pub snapshot_curves: Vec<usize>,
    pub eval_size: usize,
    pub calibration_size: usize,
}

impl Default for PwlSpec {
    fn default() -> Self {
        let cfg = |iterations, lr, every| {
            let mut c = TrainConfig::new(iterations, 10, lr, 0);
            c.eval_every = every;
            c
        };
        Self {
            seed: 0,
            variants: PwlVariant::ALL.to_vec(),
            n: 100,
            kpieces: 3,
            linear: cfg(50_000, 0.01, 500),
            conv: cfg(50_000, 0.01, 100),
            conv_cond: cfg(500, 0.99, 10),
            autoencoder: cfg(50_000, 1e-6, 500),
            auto_rate: true,
            snapshots: vec![500, 10_000, 50_000],
            snapshot_curves: vec![0, 3],
            eval_size: 100,
            calibration_size: 1000,
        }
    }
}

impl PwlSpec {
    pub fn config(&self, v: PwlVariant) -> &TrainConfig {
        match v {
            PwlVariant::Linear => &self.linear,
            PwlVariant::Conv => &self.conv,
            PwlVariant::ConvCond => &self.conv_cond,
            PwlVariant::Autoencoder => &self.autoencoder,
        }
    }

    pub fn config_mut(&mut self, v: PwlVariant) -> &mut TrainConfig {
        match v {
            PwlVariant::Linear => &mut self.linear,
            PwlVariant::Conv => &mut self.conv,
            PwlVariant::ConvCond => &mut self.conv_cond,
            PwlVariant::Autoencoder => &mut self.autoencoder,
        }
    }

    fn data_seed(&self) -> u64 {
        rng::derive_seed(self.seed, 1)
    }
}

/// Decoded curves of selected eval curves at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: usize,
    pub params_digest: String,
    /// `(original f, decoded f)` per selected curve.
    pub curves: Vec<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PwlRun {
    pub variant: PwlVariant,
    pub record: RunRecord,
    pub snapshots: Vec<Snapshot>,
    /// Learned 3-tap filter on raw rows, for the convolutional variants.
    pub filter: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PwlOutcome {
    pub n: usize,
    pub runs: Vec<PwlRun>,
}

/// Curves for one stream: curve `i` uses seed `derive_seed(seed, i)`.
pub fn curve_stream(
    n: usize,
    kpieces: usize,
    seed: u64,
) -> impl FnMut(usize) -> Result<Vec<PwlCurve>> {
    let mut next = 0u64;
    move |b| {
        (0..b)
            .map(|_| {
                next += 1;
                gen_pwl(n, kpieces, rng::derive_seed(seed, next - 1))
            })
            .collect()
    }
}

fn curves(n: usize, kpieces: usize, seed: u64, count: usize) -> Result<Vec<PwlCurve>> {
    curve_stream(n, kpieces, seed)(count)
}

/// `f = W p` as a double running sum.
pub fn integrate(p: &[f64]) -> Vec<f64> {
    let (mut slope, mut value) = (0.0, 0.0);
    p.iter()
        .map(|&x| {
            slope += x;
            value += slope;
            value
        })
        .collect()
}

fn f_tensor(curves: &[PwlCurve], shape: &[usize]) -> Result<Tensor> {
    let mut s = vec![curves.len()];
    s.extend_from_slice(shape);
    Tensor::new(s, curves.iter().flat_map(|c| c.f.iter().copied()).collect())
}

fn p_tensor(curves: &[PwlCurve], shape: &[usize]) -> Result<Tensor> {
    let mut s = vec![curves.len()];
    s.extend_from_slice(shape);
    Tensor::new(s, curves.iter().flat_map(|c| c.p.iter().copied()).collect())
}

fn mean_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len().max(1) as f64
}

pub fn linear_network(n: usize) -> Result<Network> {
    NetworkBuilder::new(vec![n])
        .layer(LayerKind::dense_no_bias(n))
        .build(InitScheme::Zeros, 0)
}

/// One output channel, kernel 3, causal padding, no bias.
pub fn conv_network(n: usize) -> Result<Network> {
    NetworkBuilder::new(vec![1, n])
        .layer(LayerKind::Conv1d {
            out_channels: 1,
            kernel_length: 3,
            padding: Padding1d::Causal,
            bias: false,
        })
        .build(InitScheme::Zeros, 0)
}

/// Encoder `500, 100, 2k` and decoder `100, 100, n`, ReLU everywhere but
/// the final layer.
pub fn autoencoder_network(n: usize, kpieces: usize, seed: u64) -> Result<Network> {
    NetworkBuilder::new(vec![n])
        .dense(500)
        .relu()
        .dense(100)
        .relu()
        .dense(2 * kpieces)
        .relu()
        .dense(100)
        .relu()
        .dense(100)
        .relu()
        .dense(n)
        .build(InitScheme::UniformFanIn, seed)
}

/// Largest eigenvalue of `E[f f^T]`.
fn linear_curvature(calib: &[PwlCurve]) -> Result<f64> {
    let n = calib[0].n;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for c in calib {
        let f = nalgebra::DVector::from_column_slice(&c.f);
        m += &f * f.transpose();
    }
    m /= calib.len() as f64;
    spectral_norm(&m)
}

/// Largest eigenvalue of `E sum_t r_t r_t^T` over causal 3-tap rows.
fn conv_curvature(calib: &[PwlCurve]) -> Result<f64> {
    let mut m = Matrix3::<f64>::zeros();
    for c in calib {
        for (r, _) in conv_rows(c) {
            let v = nalgebra::Vector3::from(r);
            m += v * v.transpose();
        }
    }
    m /= calib.len() as f64;
    Ok(m.symmetric_eigenvalues().max())
}

struct Context<'a> {
    spec: &'a PwlSpec,
    eval: Vec<PwlCurve>,
    calib: Vec<PwlCurve>,
}

impl Context<'_> {
    fn snapshot_curves(&self) -> Vec<&PwlCurve> {
        self.spec
            .snapshot_curves
            .iter()
            .filter_map(|&i| self.eval.get(i))
            .collect()
    }

    fn wants_snapshot(&self, t: usize) -> bool {
        self.spec.snapshots.contains(&t)
    }
}

fn run_network(ctx: &Context, variant: PwlVariant) -> Result<PwlRun> {
    let spec = ctx.spec;
    let n = spec.n;
    let mut config = spec.config(variant).clone();
    config.seed = spec.seed;
    if spec.auto_rate {
        match variant {
            PwlVariant::Linear => config.learning_rate = 1.0 / linear_curvature(&ctx.calib)?,
            PwlVariant::Conv => config.learning_rate = 1.0 / conv_curvature(&ctx.calib)?,
            _ => {}
        }
    }
    let shape: Vec<usize> = match variant {
        PwlVariant::Conv => vec![1, n],
        _ => vec![n],
    };
    let mut net = match variant {
        PwlVariant::Linear => linear_network(n)?,
        PwlVariant::Conv => conv_network(n)?,
        PwlVariant::Autoencoder => {
            autoencoder_network(n, spec.kpieces, rng::derive_seed(config.seed, 2))?
        }
        PwlVariant::ConvCond => return Err(Error::invalid("conv_cond is not a network variant")),
    };
    let autoencoder = variant == PwlVariant::Autoencoder;
    let mut stream = curve_stream(n, spec.kpieces, spec.data_seed());
    let mut source = |b: usize| {
        let cs = stream(b)?;
        let x = f_tensor(&cs, &shape)?;
        let y = if autoencoder {
            f_tensor(&cs, &[n])?
        } else {
            p_tensor(&cs, &shape)?
        };
        Ok((x, y))
    };
    let ex = f_tensor(&ctx.eval, &shape)?;
    let target: Vec<f64> = if autoencoder {
        ctx.eval.iter().flat_map(|c| c.f.iter().copied()).collect()
    } else {
        ctx.eval.iter().flat_map(|c| c.p.iter().copied()).collect()
    };
    let snap_curves = ctx.snapshot_curves();
    let snap_x = f_tensor(
        &snap_curves.iter().map(|c| (*c).clone()).collect::<Vec<_>>(),
        &shape,
    )?;
    let mut snapshots = Vec::new();
    let eval = |net: &Network, t: usize| -> Result<f64> {
        let pred = net.predict(&ex)?;
        let recon = mean_sq_diff(pred.data(), &target);
        if ctx.wants_snapshot(t) {
            let out = net.predict(&snap_x)?;
            let curves = snap_curves
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let row = &out.data()[i * n..(i + 1) * n];
                    let decoded = if autoencoder {
                        row.to_vec()
                    } else {
                        integrate(row)
                    };
                    (c.f.clone(), decoded)
                })
                .collect();
            snapshots.push(Snapshot {
                iteration: t,
                params_digest: net.params_digest(),
                curves,
            });
        }
        Ok(match variant {
            PwlVariant::Conv => {
                let p = net.params();
                filter_error(&[p[0], p[1], p[2]])
            }
            _ => recon,
        })
    };
    let mut record = train_sgd(
        &mut net,
        &mut source,
        LossKind::Square,
        &config,
        variant.tag(),
        eval,
    )?;
    if !record.diverged() {
        let pred = net.predict(&ex)?;
        record
            .metrics
            .insert("recon_error".into(), mean_sq_diff(pred.data(), &target));
    }
    let filter = (variant == PwlVariant::Conv).then(|| {
        let p = net.params();
        [p[0], p[1], p[2]]
    });
    if let Some(f) = filter {
        record
            .metrics
            .insert("filter_error".into(), filter_error(&f));
    }
    Ok(PwlRun {
        variant,
        record,
        snapshots,
        filter,
    })
}

fn run_conv_cond(ctx: &Context) -> Result<PwlRun> {
    let spec = ctx.spec;
    let op: WhiteningOp = estimate_c(&ctx.calib)?;
    let mut stream = curve_stream(spec.n, spec.kpieces, spec.data_seed());
    let snap_curves = ctx.snapshot_curves();
    let mut snapshots = Vec::new();
    let mut recon_at = Vec::new();
    let mut config = spec.conv_cond.clone();
    config.seed = spec.seed;
    let run = train_conditioned_conv(
        &mut stream,
        &op,
        &config,
        [0.0; 3],
        PwlVariant::ConvCond.tag(),
        |t, filter| {
            recon_at.push((t, reconstruction_error(&filter, &ctx.eval)));
            if ctx.wants_snapshot(t) {
                let curves = snap_curves
                    .iter()
                    .map(|c| {
                        let p: Vec<f64> = conv_rows(c)
                            .map(|(r, _)| r.iter().zip(&filter).map(|(a, b)| a * b).sum())
                            .collect();
                        (c.f.clone(), integrate(&p))
                    })
                    .collect();
                snapshots.push(Snapshot {
                    iteration: t,
                    params_digest: crate::engine::params_digest(&filter),
                    curves,
                });
            }
            Ok(())
        },
    )?;
    let mut record = run.record;
    record.metrics.insert(
        "recon_error".into(),
        reconstruction_error(&run.filter, &ctx.eval),
    );
    record
        .metrics
        .insert("filter_error".into(), filter_error(&run.filter));
    record.metrics.insert(
        "whitened_condition_number".into(),
        whitened_condition(&op, &ctx.calib),
    );
    if let Some(&(_, r)) = recon_at.iter().rev().find(|(t, _)| *t <= 500) {
        record.metrics.insert("recon_error_at_500".into(), r);
    }
    Ok(PwlRun {
        variant: PwlVariant::ConvCond,
        record,
        snapshots,
        filter: Some(run.filter),
    })
}

/// Condition number of the correlation of whitened windows.
fn whitened_condition(op: &WhiteningOp, curves: &[PwlCurve]) -> f64 {
    let rows: Vec<[f64; 3]> = curves
        .iter()
        .flat_map(crate::closedform::windows)
        .map(|r| op.apply(r))
        .collect();
    crate::closedform::correlation_of(&rows)
        .and_then(WhiteningOp::from_correlation)
        .map(|w| w.condition_number())
        .unwrap_or(f64::INFINITY)
}

/// Trains each requested variant on a shared curve stream.
pub fn run_pwl(spec: &PwlSpec, jobs: usize) -> Result<PwlOutcome> {
    if spec.n < 3 || spec.kpieces > spec.n {
        return Err(Error::invalid("pwl needs n >= 3 and kpieces <= n"));
    }
    let eval_seed = spec.seed.wrapping_add(EVAL_SEED_OFFSET);
    let ctx = Context {
        spec,
        eval: curves(spec.n, spec.kpieces, eval_seed, spec.eval_size)?,
        calib: curves(
            spec.n,
            spec.kpieces,
            rng::derive_seed(spec.seed, 3),
            spec.calibration_size.max(1),
        )?,
    };
    let runs = par_map(jobs, spec.variants.clone(), |v| match v {
        PwlVariant::ConvCond => run_conv_cond(&ctx),
        _ => run_network(&ctx, v),
    })?;
    Ok(PwlOutcome { n: spec.n, runs })
}

impl PwlOutcome {
    pub fn get(&self, v: PwlVariant) -> Option<&PwlRun> {
        self.runs.iter().find(|r| r.variant == v)
    }

    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        let cond = self.get(PwlVariant::ConvCond);
        if let Some(c) = cond {
            let reached = c.record.first_reaching(|e| e <= 1e-3);
            out.push(Check::new(
                "conv_cond filter error <= 1e-3 within 500 iterations",
                reached.is_some_and(|t| t <= 500),
                format!("first reached at {reached:?}"),
            ));
        }
        if let (Some(c), Some(v)) = (cond, self.get(PwlVariant::Conv)) {
            let (ec, ev) = (c.record.eval_at(500), v.record.eval_at(500));
            out.push(Check::new(
                "conv filter error at 500 >= 10x conv_cond",
                matches!((ec, ev), (Some(a), Some(b)) if b >= 10.0 * a),
                format!("conv {ev:?}, conv_cond {ec:?}"),
            ));
        }
        if let (Some(c), Some(l)) = (cond, self.get(PwlVariant::Linear)) {
            let ec = c.record.metric("recon_error_at_500");
            let el = l.record.eval_at(10_000);
            out.push(Check::new(
                "linear reconstruction error at 10000 >= 10x conv_cond at 500",
                matches!((ec, el), (Some(a), Some(b)) if b >= 10.0 * a),
                format!("linear {el:?}, conv_cond {ec:?}"),
            ));
        }
        out
    }

    pub(crate) fn write_extras(&self, dir: &Path) -> Result<()> {
        let records: Vec<&RunRecord> = self.runs.iter().map(|r| &r.record).collect();
        write_svg(
            dir.join("errors.svg"),
            &comparison_plot("pwl", "eval error", &records),
        )?;
        for run in &self.runs {
            let rdir = dir.join(run.variant.tag());
            std::fs::create_dir_all(&rdir)?;
            std::fs::write(
                rdir.join("snapshots.json"),
                serde_json::to_string_pretty(&run.snapshots)?,
            )?;
            for s in &run.snapshots {
                for (i, (f, dec)) in s.curves.iter().enumerate() {
                    let grid = |v: &[f64]| -> Vec<(f64, f64)> {
                        v.iter().enumerate().map(|(t, &y)| (t as f64, y)).collect()
                    };
                    let plot = Plot::new(
                        format!("{} after {} iterations", run.variant.tag(), s.iteration),
                        "t",
                        "f",
                    )
                    .with(Series::line("f", grid(f)))
                    .with(Series::line("decoded", grid(dec)));
                    write_svg(
                        rdir.join(format!("snapshot_{}_{i}.svg", s.iteration)),
                        &plot,
                    )?;
                }
            }
        }
        Ok(())
    }
}
