use std::time::Instant;

use super::record::{RunRecord, RunStatus, SeriesPoint, TrainConfig};
use crate::engine::{loss_eval, sgd_step_in_place, LossKind, Network, Tensor};
use crate::error::{Error, Result};
use crate::stats::norm_sq;

/// Supplies `(inputs, targets)` training batches.
pub trait BatchSource {
    fn next_batch(&mut self, batch_size: usize) -> Result<(Tensor, Tensor)>;
}

impl<F: FnMut(usize) -> Result<(Tensor, Tensor)>> BatchSource for F {
    fn next_batch(&mut self, batch_size: usize) -> Result<(Tensor, Tensor)> {
        self(batch_size)
    }
}

/// Result of one optimization step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub grad_norm: f64,
}

/// Scales `params` back onto the ball of radius `radius` when outside it.
pub fn project_onto_ball(params: &mut [f64], radius: f64) {
    let norm = norm_sq(params).sqrt();
    if norm > radius {
        let s = radius / norm;
        params.iter_mut().for_each(|p| *p *= s);
    }
}

/// Generic training loop over a model of type `M`.
///
/// `step` performs iteration `t` (1-based) and reports its loss; `eval`
/// scores the model after every checkpoint iteration. Non-finite losses or metrics stop
/// the run with a diverged status.
pub fn train_loop<M>(
    model: &mut M,
    run_id: &str,
    config: &TrainConfig,
    mut step: impl FnMut(&mut M, usize) -> Result<StepOutcome>,
    mut eval: impl FnMut(&M, usize) -> Result<f64>,
    digest: impl Fn(&M) -> String,
) -> Result<RunRecord> {
    config.validate()?;
    let start = Instant::now();
    let mut record = RunRecord::new(run_id, config.clone());
    let (mut loss_sum, mut loss_count) = (0.0, 0usize);
    for t in 1..=config.iterations {
        let out = match step(model, t) {
            Ok(out) => out,
            Err(Error::NonFinite(what)) => {
                record.status = RunStatus::Diverged {
                    iteration: t,
                    reason: format!("non-finite {what} at iteration {t}"),
                };
                break;
            }
            Err(e) => return Err(e),
        };
        if !out.loss.is_finite() || !out.grad_norm.is_finite() {
            record.status = RunStatus::Diverged {
                iteration: t,
                reason: format!("non-finite loss {} at iteration {t}", out.loss),
            };
            break;
        }
        loss_sum += out.loss;
        loss_count += 1;
        if config.is_checkpoint(t) {
            let metric = match eval(model, t) {
                Ok(m) => m,
                Err(Error::NonFinite(_)) => f64::NAN,
                Err(e) => return Err(e),
            };
            record.push(SeriesPoint {
                iteration: t,
                train_loss: loss_sum / loss_count as f64,
                eval_metric: metric,
                grad_norm: config.record_grad_norms.then_some(out.grad_norm),
            })?;
            loss_sum = 0.0;
            loss_count = 0;
            if !metric.is_finite() {
                record.status = RunStatus::Diverged {
                    iteration: t,
                    reason: format!("non-finite eval metric at iteration {t}"),
                };
                break;
            }
        }
    }
    record.final_params_digest = digest(model);
    record.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(record)
}

/// Plain minibatch SGD on `net`; `eval` receives the iteration just
/// completed.
///
/// With a projection radius set, the full parameter vector is projected
/// after every step.
pub fn train_sgd(
    net: &mut Network,
    source: &mut impl BatchSource,
    loss: LossKind,
    config: &TrainConfig,
    run_id: &str,
    eval: impl FnMut(&Network, usize) -> Result<f64>,
) -> Result<RunRecord> {
    let lr = config.learning_rate;
    let radius = config.projection_radius;
    let batch_size = config.batch_size;
    train_loop(
        net,
        run_id,
        config,
        |net, _| {
            let (x, y) = source.next_batch(batch_size)?;
            let (pred, cache) = net.forward(&x)?;
            let (value, upstream) = loss_eval(loss, &pred, &y)?;
            if !value.is_finite() {
                return Ok(StepOutcome {
                    loss: value,
                    grad_norm: f64::NAN,
                });
            }
            let grads = net.backward(&cache, &upstream)?.params;
            let grad_norm = norm_sq(&grads).sqrt();
            sgd_step_in_place(net.params_mut(), &grads, lr)?;
            if let Some(b) = radius {
                project_onto_ball(net.params_mut(), b);
            }
            Ok(StepOutcome {
                loss: value,
                grad_norm,
            })
        },
        eval,
        |net| net.params_digest(),
    )
}
