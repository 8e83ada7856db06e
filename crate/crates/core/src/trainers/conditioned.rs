use super::record::{RunRecord, TrainConfig};
use super::sgd::{train_loop, StepOutcome};
use crate::closedform::WhiteningOp;
use crate::datagen::PwlCurve;
use crate::error::{Error, Result};

/// The second-difference filter applied to `[f_{t-2}, f_{t-1}, f_t]`.
pub const SECOND_DIFFERENCE: [f64; 3] = [1.0, -2.0, 1.0];

/// Rows `[f_{t-2}, f_{t-1}, f_t]` (zero before the curve starts) paired with
/// the target `p_t`, for every `t`.
pub fn conv_rows(curve: &PwlCurve) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
    let f = &curve.f;
    let at = move |i: isize| if i < 0 { 0.0 } else { f[i as usize] };
    (0..curve.n).map(move |t| {
        let t = t as isize;
        ([at(t - 2), at(t - 1), at(t)], curve.p[t as usize])
    })
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Euclidean distance from `filter` to `[1, -2, 1]`.
pub fn filter_error(filter: &[f64; 3]) -> f64 {
    filter
        .iter()
        .zip(&SECOND_DIFFERENCE)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Mean over curves and positions of `(conv(f)_t - p_t)^2`.
pub fn reconstruction_error(filter: &[f64; 3], curves: &[PwlCurve]) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for c in curves {
        for (r, p) in conv_rows(c) {
            sum += (dot3(&r, filter) - p).powi(2);
            count += 1;
        }
    }
    sum / count.max(1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedRun {
    pub record: RunRecord,
    /// Weights acting on whitened rows.
    pub weights: [f64; 3],
    /// The same predictor expressed on raw rows.
    pub filter: [f64; 3],
}

/// SGD on `min_w 1/2 E (r C^{-1/2} . w - p)^2` over whitened 3-tap rows.
///
/// Each iteration draws `batch_size` curves from `source` and averages the
/// gradient over all their rows. The eval metric is the distance from the
/// de-whitened filter to `[1, -2, 1]`; `observe` sees that filter at every
/// checkpoint.
pub fn train_conditioned_conv(
    source: &mut impl FnMut(usize) -> Result<Vec<PwlCurve>>,
    op: &WhiteningOp,
    config: &TrainConfig,
    init: [f64; 3],
    run_id: &str,
    mut observe: impl FnMut(usize, [f64; 3]) -> Result<()>,
) -> Result<ConditionedRun> {
    if op.c_inv_sqrt.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("whitening operator".into()));
    }
    let lr = config.learning_rate;
    let batch = config.batch_size;
    let mut w = init;
    let record = train_loop(
        &mut w,
        run_id,
        config,
        |w, _| {
            let curves = source(batch)?;
            let (mut g, mut loss, mut count) = ([0.0; 3], 0.0, 0usize);
            for c in &curves {
                for (r, p) in conv_rows(c) {
                    let x = op.apply(r);
                    let e = dot3(&x, w) - p;
                    loss += 0.5 * e * e;
                    for j in 0..3 {
                        g[j] += e * x[j];
                    }
                    count += 1;
                }
            }
            if count == 0 {
                return Err(Error::invalid("batch of curves has no rows"));
            }
            let n = count as f64;
            for j in 0..3 {
                w[j] -= lr * g[j] / n;
            }
            Ok(StepOutcome {
                loss: loss / n,
                grad_norm: (dot3(&g, &g)).sqrt() / n,
            })
        },
        |w, t| {
            let filter = op.dewhiten_filter(*w);
            observe(t, filter)?;
            Ok(filter_error(&filter))
        },
        |w| crate::engine::params_digest(w),
    )?;
    let filter = op.dewhiten_filter(w);
    Ok(ConditionedRun {
        record,
        weights: w,
        filter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::estimate_c;
    use crate::datagen::gen_pwl;
    use nalgebra::Matrix3;

    #[test]
    fn rows_reproduce_p() {
        let c = gen_pwl(30, 3, 4).unwrap();
        assert!(reconstruction_error(&SECOND_DIFFERENCE, &[c]) < 1e-20);
    }

    #[test]
    fn identity_whitener_converges() {
        let op = WhiteningOp::from_correlation(Matrix3::identity()).unwrap();
        let mut seed = 0;
        let mut src = |b: usize| {
            seed += 1;
            (0..b)
                .map(|i| gen_pwl(20, 3, seed * 100 + i as u64))
                .collect()
        };
        let cfg = TrainConfig::new(50, 4, 0.001, 0);
        let run =
            train_conditioned_conv(&mut src, &op, &cfg, [0.0; 3], "t", |_, _| Ok(())).unwrap();
        let first = run.record.series[0].eval_metric;
        assert!(run.record.last().unwrap().eval_metric < first);
    }

    #[test]
    fn solution_is_fixed() {
        let curves: Vec<_> = (0..20).map(|s| gen_pwl(40, 3, s).unwrap()).collect();
        let op = estimate_c(&curves).unwrap();
        let c_sqrt = op.c_inv_sqrt.try_inverse().unwrap();
        let w = c_sqrt * nalgebra::Vector3::from(SECOND_DIFFERENCE);
        let w = [w[0], w[1], w[2]];
        let mut src = |b: usize| Ok(curves[..b].to_vec());
        let cfg = TrainConfig::new(5, 10, 0.99, 0);
        let run = train_conditioned_conv(&mut src, &op, &cfg, w, "t", |_, _| Ok(())).unwrap();
        assert!(filter_error(&run.filter) < 1e-9);
        for (a, b) in run.weights.iter().zip(&w) {
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
        }
    }
}
