use serde::{Deserialize, Serialize};

use super::record::{RunRecord, TrainConfig};
use super::sgd::{project_onto_ball, train_loop, BatchSource, StepOutcome};
use crate::datagen::{check_levels, step_u, step_u_tilde, step_u_tilde_deriv};
use crate::engine::{sgd_step_in_place, InitScheme, LayerKind, NetworkBuilder, Tensor};
use crate::error::{Error, Result};
use crate::stats::norm_sq;

/// Monotone activation `u` applied to `w^T x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Link {
    Identity,
    Step { z: Vec<f64> },
    SmoothStep { z: Vec<f64>, c: f64 },
}

impl Link {
    pub fn value(&self, r: f64) -> f64 {
        match self {
            Link::Identity => r,
            Link::Step { z } => step_u(r, z),
            Link::SmoothStep { z, c } => step_u_tilde(r, z, *c),
        }
    }

    /// Derivative, with 0 for the step (almost everywhere).
    pub fn derivative(&self, r: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Step { .. } => 0.0,
            Link::SmoothStep { z, c } => step_u_tilde_deriv(r, z, *c),
        }
    }

    /// Bound on `|u|`, if any.
    pub fn range_bound(&self) -> Option<f64> {
        match self {
            Link::Identity => None,
            Link::Step { z } | Link::SmoothStep { z, .. } => {
                Some(z[0].abs().max(z[z.len() - 1].abs()))
            }
        }
    }

    /// Lipschitz constant bound, if finite.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            Link::Identity => Some(1.0),
            Link::Step { .. } => None,
            Link::SmoothStep { z, c } => Some(z.windows(2).map(|w| (w[1] - w[0]) * c / 4.0).sum()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Link::Identity => Ok(()),
            Link::Step { z } => check_levels(z),
            Link::SmoothStep { z, c } => {
                check_levels(z)?;
                if !(*c > 0.0 && c.is_finite()) {
                    return Err(Error::invalid("sigmoid sharpness must be positive"));
                }
                Ok(())
            }
        }
    }
}

/// Learned weights of a forward-only run together with its record.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOnlyRun {
    pub record: RunRecord,
    pub w: Vec<f64>,
    pub b: f64,
    /// Iterations where `||w_t - v*||^2 - ||w_{t+1} - v*||^2 >= eta^2 B^2 c^2`.
    pub large_descents: Option<usize>,
    /// The allowance `1 / (eta^2 c^2)` for `large_descents`.
    pub descent_allowance: Option<f64>,
}

/// Mean squared error of `u(w^T x + b)` against `y`.
pub fn forward_only_mse(w: &[f64], b: f64, link: &Link, x: &Tensor, y: &[f64]) -> Result<f64> {
    if x.sample_len() != w.len() || x.batch_size() != y.len() {
        return Err(Error::shape("evaluation set does not match the weights"));
    }
    let n = y.len() as f64;
    Ok((0..y.len())
        .map(|i| {
            let r: f64 = x.row(i).iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
            (link.value(r) - y[i]).powi(2)
        })
        .sum::<f64>()
        / n)
}

/// The update `w <- P_B(w - eta E[(u(w^T x + b) - y) x])`.
///
/// The model is a dense `d -> 1` layer run through the engine; the message
/// sent back from the activation is the residual itself, so `u'` never
/// enters. The bias gets the same residual message. Projection applies to
/// `w`; the bias is left unconstrained. `teacher` enables counting of large
/// per-step descents toward `v*`.
pub fn train_forward_only(
    w0: &[f64],
    b0: f64,
    source: &mut impl BatchSource,
    link: &Link,
    config: &TrainConfig,
    teacher: Option<&[f64]>,
    eval_set: (&Tensor, &[f64]),
    run_id: &str,
) -> Result<ForwardOnlyRun> {
    link.validate()?;
    let radius = config
        .projection_radius
        .ok_or_else(|| Error::invalid("forward-only training needs a projection radius"))?;
    let d = w0.len();
    if let Some(v) = teacher {
        if v.len() != d {
            return Err(Error::shape("teacher dimension differs from w"));
        }
    }
    let mut net = NetworkBuilder::new(vec![d])
        .layer(LayerKind::dense(1))
        .build(InitScheme::Zeros, 0)?;
    let mut init = w0.to_vec();
    init.push(b0);
    net.set_params(init)?;

    let eta = config.learning_rate;
    let c = link.range_bound();
    let threshold = c.map(|c| (eta * radius * c).powi(2));
    let mut large = 0usize;
    let dist = |p: &[f64], v: &[f64]| p.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let batch_size = config.batch_size;
    let (ex, ey) = eval_set;

    let record = train_loop(
        &mut net,
        run_id,
        config,
        |net, _| {
            let (x, y) = source.next_batch(batch_size)?;
            let (r, cache) = net.forward(&x)?;
            let n = r.len() as f64;
            let mut loss = 0.0;
            let residual: Vec<f64> = r
                .data()
                .iter()
                .zip(y.data())
                .map(|(&ri, &yi)| {
                    let e = link.value(ri) - yi;
                    loss += 0.5 * e * e / n;
                    e / n
                })
                .collect();
            let upstream = Tensor::new(r.shape().to_vec(), residual)?;
            let grads = net.backward(&cache, &upstream)?.params;
            let before = teacher.map(|v| dist(&net.params()[..d], v));
            let params = net.params_mut();
            sgd_step_in_place(params, &grads, eta)?;
            project_onto_ball(&mut params[..d], radius);
            if let (Some(v), Some(before), Some(th)) = (teacher, before, threshold) {
                if before - dist(&params[..d], v) >= th {
                    large += 1;
                }
            }
            Ok(StepOutcome {
                loss,
                grad_norm: norm_sq(&grads).sqrt(),
            })
        },
        |net, _| {
            let p = net.params();
            forward_only_mse(&p[..d], p[d], link, ex, ey)
        },
        |net| net.params_digest(),
    )?;
    let p = net.params();
    let counting = teacher.is_some() && c.is_some();
    let allowance = c.filter(|_| counting).map(|c| 1.0 / (eta * c).powi(2));
    let mut record = record;
    if let Some(a) = allowance {
        record.metrics.insert("large_descents".into(), large as f64);
        record.metrics.insert("descent_allowance".into(), a);
    }
    Ok(ForwardOnlyRun {
        record,
        w: p[..d].to_vec(),
        b: p[d],
        large_descents: counting.then_some(large),
        descent_allowance: allowance,
    })
}

/// Horizon `T = c^4 B^4 L^2 / eps^2` and rate `eta = sqrt(1 / (T c^2))`.
pub fn forward_only_schedule(c: f64, b: f64, l: f64, eps: f64) -> Result<(usize, f64)> {
    if [c, b, l, eps].iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::invalid("c, B, L and eps must be positive"));
    }
    let t = (c.powi(4) * b.powi(4) * l * l / (eps * eps)).ceil();
    if t > 1e9 {
        return Err(Error::TooLarge(format!("horizon of {t} iterations")));
    }
    let t = t.max(1.0) as usize;
    Ok((t, (1.0 / (t as f64 * c * c)).sqrt()))
}
