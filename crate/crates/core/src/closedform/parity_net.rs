use crate::engine::{InitScheme, LayerKind, Network, NetworkBuilder};
use crate::error::{Error, Result};

/// Hidden units used by [`build_parity_network`] for dimension `d`.
pub fn parity_triads(d: usize) -> usize {
    d / 2 + 1
}

/// Dense-ReLU-dense network computing `(-1)^<x, v*>` exactly on `{0,1}^d`.
///
/// With `s = <x, v*>`, triad `i` holds `relu(s - 2i + 1/2)`, `relu(s - 2i)`
/// and `relu(s - 2i - 1/2)` combined with weights `1, -2, 1`, which is `1/2`
/// at `s = 2i` and 0 at every other integer. The output scales the sum of
/// triads by 4 and adds -1. Triads run over `i = 0..=d/2`; hidden width is
/// padded with inert units up to `10 d`.
pub fn build_parity_network(d: usize, v_star: &[u8]) -> Result<Network> {
    if d < 1 || v_star.len() != d || v_star.iter().any(|&b| b > 1) {
        return Err(Error::invalid(format!(
            "v_star must be a {d}-dimensional 0/1 vector"
        )));
    }
    let width = 10 * d;
    let triads = parity_triads(d);
    debug_assert!(3 * triads <= width);
    let mut net = NetworkBuilder::new(vec![d])
        .layer(LayerKind::dense(width))
        .relu()
        .layer(LayerKind::dense(1))
        .build(InitScheme::Zeros, 0)?;

    let mut hidden = vec![0.0; width * d + width];
    let mut out = vec![0.0; width + 1];
    for i in 0..triads {
        let offsets = [0.5, 0.0, -0.5];
        let weights = [1.0, -2.0, 1.0];
        for m in 0..3 {
            let unit = 3 * i + m;
            for (j, &b) in v_star.iter().enumerate() {
                hidden[unit * d + j] = b as f64;
            }
            hidden[width * d + unit] = offsets[m] - 2.0 * i as f64;
            out[unit] = 4.0 * weights[m];
        }
    }
    out[width] = -1.0;
    let params: Vec<f64> = hidden.into_iter().chain(out).collect();
    net.set_params(params)?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{enumerate_bits, parity_label};
    use crate::engine::Tensor;

    #[test]
    fn exact_on_small_cube() {
        let v = [1u8, 0, 1, 1, 1];
        let net = build_parity_network(5, &v).unwrap();
        for idx in 0..32 {
            let x = enumerate_bits(5, idx);
            let xt = Tensor::new(vec![1, 5], x.iter().map(|&b| b as f64).collect()).unwrap();
            let y = net.predict(&xt).unwrap().data()[0];
            assert_eq!(y, parity_label(&x, &v) as f64);
        }
    }

    #[test]
    fn zero_vector_is_constant() {
        let net = build_parity_network(3, &[0, 0, 0]).unwrap();
        let xt = Tensor::new(vec![2, 3], vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(net.predict(&xt).unwrap().data(), &[1.0, 1.0]);
    }
}
