//! Builds a small conv + dense network, runs one backward pass and checks
//! it against central differences.

use graddiag::engine::{
    finite_diff_grad, InitScheme, LayerKind, LossKind, NetworkBuilder, Padding1d, Tensor,
};

fn main() -> graddiag::Result<()> {
    let net = NetworkBuilder::new(vec![1, 12])
        .layer(LayerKind::Conv1d {
            out_channels: 3,
            kernel_length: 3,
            padding: Padding1d::Causal,
            bias: true,
        })
        .sigmoid()
        .dense(4)
        .relu()
        .dense(2)
        .build(InitScheme::UniformFanIn, 7)?;

    let x = Tensor::new(
        vec![4, 1, 12],
        (0..48)
            .map(|i| ((i * 37) % 11) as f64 / 5.0 - 1.0)
            .collect(),
    )?;
    let y = Tensor::new(vec![4, 2], vec![0.5, -0.5, 1.0, 0.0, -1.0, 0.25, 0.0, 0.75])?;

    let (loss, grad) = net.loss_and_grad(&x, &y, LossKind::Square)?;
    let fd = finite_diff_grad(&net, &x, &y, LossKind::Square, 1e-6)?;
    let worst = grad
        .iter()
        .zip(&fd)
        .map(|(a, b)| (a - b).abs() / (1e-7 + a.abs().max(b.abs())))
        .fold(0.0, f64::max);

    println!("parameters: {}", net.param_count());
    println!("loss: {loss:.6}");
    println!("worst relative gap to finite differences: {worst:.2e}");
    Ok(())
}
