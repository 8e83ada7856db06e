use super::loss::LossKind;
use super::network::Network;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Central-difference gradient of the mean batch loss, one coordinate at a time.
///
/// This is the oracle that [`Network::backward`] is checked against; it only
/// uses forward passes.
pub fn finite_diff_grad(
    net: &Network,
    batch: &Tensor,
    targets: &Tensor,
    kind: LossKind,
    epsilon: f64,
) -> Result<Vec<f64>> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let mut probe = net.clone();
    let base = net.params().to_vec();
    let mut grad = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        probe.params_mut()[i] = base[i] + epsilon;
        let plus = probe.loss(batch, targets, kind)?;
        probe.params_mut()[i] = base[i] - epsilon;
        let minus = probe.loss(batch, targets, kind)?;
        probe.params_mut()[i] = base[i];
        grad.push((plus - minus) / (2.0 * epsilon));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{InitScheme, LayerKind, NetworkBuilder};

    #[test]
    fn linear_model_matches_analytic_gradient() {
        let mut net = NetworkBuilder::new(vec![1])
            .layer(LayerKind::dense_no_bias(1))
            .build(InitScheme::Zeros, 0)
            .unwrap();
        net.set_params(vec![0.7]).unwrap();
        let x = Tensor::new(vec![1, 1], vec![1.5]).unwrap();
        let y = Tensor::new(vec![1, 1], vec![2.0]).unwrap();
        // d/dw 1/2 (w x - y)^2 = (w x - y) x; quadratic, so central differences are exact up to rounding.
        let analytic = (0.7 * 1.5 - 2.0) * 1.5;
        let fd = finite_diff_grad(&net, &x, &y, LossKind::Square, 1e-4).unwrap();
        assert!((fd[0] - analytic).abs() < 1e-9);
    }

    #[test]
    fn constant_surface_has_zero_gradient() {
        // Zero weights feeding a ReLU with zero bias: the output is 0 under any small perturbation
        // of the second-layer weights only when the hidden layer is dead.
        let mut net = NetworkBuilder::new(vec![2])
            .dense(2)
            .relu()
            .layer(LayerKind::dense_no_bias(1))
            .build(InitScheme::Zeros, 0)
            .unwrap();
        let mut p = net.params().to_vec();
        p[4] = -5.0;
        p[5] = -5.0;
        net.set_params(p).unwrap();
        let x = Tensor::new(vec![1, 2], vec![0.3, 0.4]).unwrap();
        let y = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let fd = finite_diff_grad(&net, &x, &y, LossKind::Square, 1e-3).unwrap();
        assert!(fd.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn rejects_bad_epsilon() {
        let net = NetworkBuilder::new(vec![1])
            .dense(1)
            .build(InitScheme::Zeros, 0)
            .unwrap();
        let x = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        assert!(finite_diff_grad(&net, &x, &x, LossKind::Square, 0.0).is_err());
    }
}
