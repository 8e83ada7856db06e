use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Losses used by the experiments. Every loss is averaged over the batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `1/2 (yhat - y)^2`, summed over output coordinates.
    Square,
    /// `max(0, 1 - yhat * y)`.
    Hinge,
    /// Softmax cross-entropy; targets are class indices of shape `[batch]`.
    MulticlassLogistic,
    /// `-z . yhat`.
    NegativeInnerProduct,
}

/// Mean loss over the batch and its gradient with respect to `pred`.
pub fn loss_eval(kind: LossKind, pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    let batch = pred.batch_size() as f64;
    let p = pred.data();
    let t = target.data();
    match kind {
        LossKind::MulticlassLogistic => {
            let classes = pred.sample_len();
            if t.len() != pred.batch_size() {
                return Err(Error::shape(format!(
                    "multiclass targets need one class index per sample, got {} for batch {}",
                    t.len(),
                    pred.batch_size()
                )));
            }
            let mut grad = vec![0.0; p.len()];
            let mut total = 0.0;
            for (b, &label) in t.iter().enumerate() {
                if label < 0.0 || label.fract() != 0.0 || label as usize >= classes {
                    return Err(Error::invalid(format!(
                        "class index {label} out of range for {classes} classes"
                    )));
                }
                let label = label as usize;
                let logits = &p[b * classes..(b + 1) * classes];
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
                let lse = max + sum.ln();
                total += lse - logits[label];
                let g = &mut grad[b * classes..(b + 1) * classes];
                for (c, gc) in g.iter_mut().enumerate() {
                    *gc = (logits[c] - lse).exp() / batch;
                }
                g[label] -= 1.0 / batch;
            }
            Ok((total / batch, Tensor::new(pred.shape().to_vec(), grad)?))
        }
        _ => {
            if p.len() != t.len() {
                return Err(Error::shape(format!(
                    "prediction has {} values but target has {}",
                    p.len(),
                    t.len()
                )));
            }
            let mut grad = vec![0.0; p.len()];
            let mut total = 0.0;
            for ((g, &yhat), &y) in grad.iter_mut().zip(p).zip(t) {
                let (l, d) = match kind {
                    LossKind::Square => (0.5 * (yhat - y) * (yhat - y), yhat - y),
                    LossKind::Hinge => {
                        let margin = yhat * y;
                        // Subgradient 0 at margin exactly 1.
                        if margin < 1.0 {
                            (1.0 - margin, -y)
                        } else {
                            (0.0, 0.0)
                        }
                    }
                    LossKind::NegativeInnerProduct => (-y * yhat, -y),
                    LossKind::MulticlassLogistic => unreachable!(),
                };
                total += l;
                *g = d / batch;
            }
            Ok((total / batch, Tensor::new(pred.shape().to_vec(), grad)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Tensor {
        Tensor::new(vec![1, 1], vec![v]).unwrap()
    }

    #[test]
    fn square_and_hinge_examples() {
        let (l, g) = loss_eval(LossKind::Square, &s(2.0), &s(1.0)).unwrap();
        assert_eq!((l, g.data()[0]), (0.5, 1.0));
        let (l, g) = loss_eval(LossKind::Hinge, &s(0.5), &s(1.0)).unwrap();
        assert_eq!((l, g.data()[0]), (0.5, -1.0));
        let (l, g) = loss_eval(LossKind::Hinge, &s(1.0), &s(1.0)).unwrap();
        assert_eq!((l, g.data()[0]), (0.0, 0.0));
    }

    #[test]
    fn negative_inner_product() {
        let p = Tensor::new(vec![1, 3], vec![0.2, 0.3, 0.5]).unwrap();
        let z = Tensor::new(vec![1, 3], vec![1.0, -1.0, 1.0]).unwrap();
        let (l, g) = loss_eval(LossKind::NegativeInnerProduct, &p, &z).unwrap();
        assert!((l + 0.4).abs() < 1e-15);
        assert_eq!(g.data(), &[-1.0, 1.0, -1.0]);
    }

    #[test]
    fn multiclass_gradient_sums_to_zero_and_checks_range() {
        let p = Tensor::new(vec![2, 3], vec![0.1, 2.0, -1.0, 0.0, 0.0, 0.0]).unwrap();
        let t = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let (l, g) = loss_eval(LossKind::MulticlassLogistic, &p, &t).unwrap();
        assert!(l > 0.0);
        for b in 0..2 {
            let s: f64 = g.row(b).iter().sum();
            assert!(s.abs() < 1e-15);
        }
        let uniform = 3f64.ln();
        let first = {
            let m = 2.0f64;
            let lse = m + ((0.1 - m).exp() + 1.0 + (-1.0 - m).exp()).ln();
            lse - 2.0
        };
        assert!((l - 0.5 * (first + uniform)).abs() < 1e-12);
        let bad = Tensor::vector(vec![1.0, 3.0]).unwrap();
        assert!(matches!(
            loss_eval(LossKind::MulticlassLogistic, &p, &bad),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn square_is_zero_only_at_target() {
        let (l, _) = loss_eval(LossKind::Square, &s(-3.25), &s(-3.25)).unwrap();
        assert_eq!(l, 0.0);
        let (l, _) = loss_eval(LossKind::Square, &s(-3.25), &s(-3.0)).unwrap();
        assert!(l > 0.0);
    }
}
