#![allow(dead_code)]

use std::io::Write;

use graddiag::engine::{
    finite_diff_grad, InitScheme, LayerKind, LossKind, Network, NetworkBuilder, Padding1d, Tensor,
};
use graddiag::rng;
use rand::Rng as _;

/// Writes a line past the test harness output capture so it shows up in
/// the log of every run.
pub fn report(line: &str) {
    let mut err = std::io::stderr();
    let _ = writeln!(err, "{line}");
}

pub fn verdict(criterion: u32, passed: bool, detail: &str) {
    let tag = if passed { "PASS" } else { "FAIL" };
    report(&format!("{tag} criterion {criterion}: {detail}"));
}

/// A random network, batch, targets and loss for gradient checks.
pub struct GradCase {
    pub net: Network,
    pub x: Tensor,
    pub y: Tensor,
    pub loss: LossKind,
}

const KINK_MARGIN: f64 = 1e-3;

fn uniform(n: usize, scale: f64, r: &mut rng::Rng) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-scale..scale)).collect()
}

/// Architecture `i mod 6`; together the six cover every layer kind,
/// padding, stride and loss.
pub fn grad_case(i: u64) -> GradCase {
    let seed = rng::derive_seed(0x6ead, i);
    let mut r = rng::seeded(seed);
    let batch = 3;
    let (builder, loss, in_len, out_len) = match i % 6 {
        0 => (
            NetworkBuilder::new(vec![4]).dense(5).relu().dense(2),
            LossKind::Square,
            4,
            2,
        ),
        1 => (
            NetworkBuilder::new(vec![3])
                .dense(4)
                .sigmoid()
                .dense(3)
                .softmax(),
            LossKind::NegativeInnerProduct,
            3,
            3,
        ),
        2 => {
            let padding =
                [Padding1d::Valid, Padding1d::Same, Padding1d::Causal][(i / 6 % 3) as usize];
            (
                NetworkBuilder::new(vec![2, 7])
                    .layer(LayerKind::Conv1d {
                        out_channels: 2,
                        kernel_length: 3,
                        padding,
                        bias: true,
                    })
                    .relu()
                    .dense(1),
                LossKind::Hinge,
                14,
                1,
            )
        }
        3 => (
            NetworkBuilder::new(vec![1, 6, 6])
                .layer(LayerKind::conv2d(2, 3, 1))
                .relu()
                .layer(LayerKind::conv2d(2, 2, 2))
                .dense(3),
            LossKind::MulticlassLogistic,
            36,
            3,
        ),
        4 => (
            NetworkBuilder::new(vec![3])
                .layer(LayerKind::dense_no_bias(4))
                .layer(LayerKind::Identity)
                .dense(2),
            LossKind::Square,
            3,
            2,
        ),
        _ => (
            NetworkBuilder::new(vec![1, 1, 6])
                .layer(LayerKind::Conv2d {
                    out_channels: 2,
                    kernel_height: 1,
                    kernel_width: 3,
                    stride: 1,
                    bias: false,
                })
                .sigmoid()
                .dense(1),
            LossKind::Square,
            6,
            1,
        ),
    };
    let net = builder.build(InitScheme::UniformFanIn, seed).unwrap();
    loop {
        let x = Tensor::new(
            [vec![batch], net.input_shape().to_vec()].concat(),
            uniform(batch * in_len, 1.0, &mut r),
        )
        .unwrap();
        let y = match loss {
            LossKind::MulticlassLogistic => Tensor::new(
                vec![batch],
                (0..batch)
                    .map(|_| r.random_range(0..out_len) as f64)
                    .collect(),
            ),
            LossKind::Hinge => Tensor::new(
                vec![batch, 1],
                (0..batch)
                    .map(|_| if r.random_bool(0.5) { 1.0 } else { -1.0 })
                    .collect(),
            ),
            _ => Tensor::new(vec![batch, out_len], uniform(batch * out_len, 1.0, &mut r)),
        }
        .unwrap();
        if away_from_kinks(&net, &x, &y, loss) {
            return GradCase { net, x, y, loss };
        }
    }
}

fn away_from_kinks(net: &Network, x: &Tensor, y: &Tensor, loss: LossKind) -> bool {
    let (pred, cache) = net.forward(x).unwrap();
    for (i, layer) in net.layers().iter().enumerate() {
        if matches!(layer.kind, LayerKind::Relu)
            && cache.layer_input(i).iter().any(|v| v.abs() < KINK_MARGIN)
        {
            return false;
        }
    }
    if loss == LossKind::Hinge {
        return pred
            .data()
            .iter()
            .zip(y.data())
            .all(|(p, t)| (1.0 - p * t).abs() > KINK_MARGIN);
    }
    true
}

/// Largest violation of `|a - b| <= atol + rtol max(|a|, |b|)`; at most 0
/// means every coordinate agrees.
pub fn worst_mismatch(a: &[f64], b: &[f64], rtol: f64, atol: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() - atol - rtol * x.abs().max(y.abs()))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn backward_vs_oracle(case: &GradCase) -> (Vec<f64>, Vec<f64>) {
    let (_, g) = case.net.loss_and_grad(&case.x, &case.y, case.loss).unwrap();
    let fd = finite_diff_grad(&case.net, &case.x, &case.y, case.loss, 1e-6).unwrap();
    (g, fd)
}
