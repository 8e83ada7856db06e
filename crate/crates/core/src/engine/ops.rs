//! Per-layer forward and backward kernels over flat batch buffers.
//!
//! Every kernel sees `batch * in_len` inputs laid out sample after sample.
//! Backward kernels accumulate into the parameter gradient slice and
//! overwrite the input gradient buffer.

use super::layer::{LayerKind, LayerSpec};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn forward(spec: &LayerSpec, params: &[f64], input: &[f64], batch: usize) -> Vec<f64> {
    let in_len = spec.in_len();
    let out_len = spec.out_len();
    let mut out = vec![0.0; batch * out_len];
    match spec.kind {
        LayerKind::Dense { width, bias } => {
            let weights = &params[..width * in_len];
            for b in 0..batch {
                let x = &input[b * in_len..(b + 1) * in_len];
                let y = &mut out[b * out_len..(b + 1) * out_len];
                for (o, yo) in y.iter_mut().enumerate() {
                    let row = &weights[o * in_len..(o + 1) * in_len];
                    let mut acc = if bias {
                        params[width * in_len + o]
                    } else {
                        0.0
                    };
                    for (w, xi) in row.iter().zip(x) {
                        acc += w * xi;
                    }
                    *yo = acc;
                }
            }
        }
        LayerKind::Conv1d {
            out_channels,
            kernel_length: k,
            padding,
            bias,
        } => {
            let cin = spec.in_shape[0];
            let len = spec.in_shape[1];
            let lout = spec.out_shape[1];
            let (left, _) = padding.amounts(k);
            let nw = out_channels * cin * k;
            for b in 0..batch {
                let x = &input[b * in_len..(b + 1) * in_len];
                let y = &mut out[b * out_len..(b + 1) * out_len];
                for co in 0..out_channels {
                    let bval = if bias { params[nw + co] } else { 0.0 };
                    for t in 0..lout {
                        let mut acc = bval;
                        for ci in 0..cin {
                            let wrow = &params[(co * cin + ci) * k..(co * cin + ci + 1) * k];
                            for (m, w) in wrow.iter().enumerate() {
                                let pos = t + m;
                                if pos < left || pos - left >= len {
                                    continue;
                                }
                                acc += w * x[ci * len + pos - left];
                            }
                        }
                        y[co * lout + t] = acc;
                    }
                }
            }
        }
        LayerKind::Conv2d {
            out_channels,
            kernel_height: kh,
            kernel_width: kw,
            stride,
            bias,
        } => {
            let (cin, h, w) = (spec.in_shape[0], spec.in_shape[1], spec.in_shape[2]);
            let (oh, ow) = (spec.out_shape[1], spec.out_shape[2]);
            let nw = out_channels * cin * kh * kw;
            for b in 0..batch {
                let x = &input[b * in_len..(b + 1) * in_len];
                let y = &mut out[b * out_len..(b + 1) * out_len];
                for co in 0..out_channels {
                    let bval = if bias { params[nw + co] } else { 0.0 };
                    let yplane = &mut y[co * oh * ow..(co + 1) * oh * ow];
                    yplane.iter_mut().for_each(|v| *v = bval);
                    for ci in 0..cin {
                        let xplane = &x[ci * h * w..(ci + 1) * h * w];
                        let kbase = (co * cin + ci) * kh * kw;
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let wv = params[kbase + ky * kw + kx];
                                if wv == 0.0 {
                                    continue;
                                }
                                for oy in 0..oh {
                                    let xrow = &xplane[(oy * stride + ky) * w..];
                                    let yrow = &mut yplane[oy * ow..(oy + 1) * ow];
                                    for (ox, yv) in yrow.iter_mut().enumerate() {
                                        *yv += wv * xrow[ox * stride + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        LayerKind::Relu => {
            for (o, &i) in out.iter_mut().zip(input) {
                *o = if i > 0.0 { i } else { 0.0 };
            }
        }
        LayerKind::Sigmoid => {
            for (o, &i) in out.iter_mut().zip(input) {
                *o = sigmoid(i);
            }
        }
        LayerKind::Identity => out.copy_from_slice(input),
        LayerKind::Softmax => {
            for b in 0..batch {
                let x = &input[b * in_len..(b + 1) * in_len];
                let y = &mut out[b * out_len..(b + 1) * out_len];
                let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for (yo, &xi) in y.iter_mut().zip(x) {
                    *yo = (xi - max).exp();
                    sum += *yo;
                }
                y.iter_mut().for_each(|v| *v /= sum);
            }
        }
    }
    out
}

/// Backpropagate `grad_out` through one layer.
///
/// `input` and `output` are the cached activations of the forward pass.
/// Returns the gradient with respect to the layer input; parameter
/// gradients are added into `grad_params`.
pub(crate) fn backward(
    spec: &LayerSpec,
    params: &[f64],
    input: &[f64],
    output: &[f64],
    grad_out: &[f64],
    grad_params: &mut [f64],
    batch: usize,
) -> Vec<f64> {
    let in_len = spec.in_len();
    let out_len = spec.out_len();
    let mut grad_in = vec![0.0; batch * in_len];
    match spec.kind {
        LayerKind::Dense { width, bias } => {
            let nw = width * in_len;
            for b in 0..batch {
                let x = &input[b * in_len..(b + 1) * in_len];
                let g = &grad_out[b * out_len..(b + 1) * out_len];
                let gi = &mut grad_in[b * in_len..(b + 1) * in_len];
                for (o, &go) in g.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    let row = &params[o * in_len..(o + 1) * in_len];
                    let grow = &mut grad_params[o * in_len..(o + 1) * in_len];
                    for i in 0..in_len {
                        grow[i] += go * x[i];
                        gi[i] += go * row[i];
                    }
                    if bias {
                        grad_params[nw + o] += go;
                    }
                }
            }
        }
        LayerKind::Conv1d {
            out_channels,
            kernel_length: k,
            padding,
            bias,
        } => {
            let cin = spec.in_shape[0];
            let len = spec.in_shape[1];
            let lout = spec.out_shape[1];
            let (left, _) = padding.amounts(k);
            let nw = out_channels * cin * k;
            for b in 0..batch {
                let x = &input[b * in_len..(b + 1) * in_len];
                let g = &grad_out[b * out_len..(b + 1) * out_len];
                let gi = &mut grad_in[b * in_len..(b + 1) * in_len];
                for co in 0..out_channels {
                    for t in 0..lout {
                        let go = g[co * lout + t];
                        if go == 0.0 {
                            continue;
                        }
                        if bias {
                            grad_params[nw + co] += go;
                        }
                        for ci in 0..cin {
                            let base = (co * cin + ci) * k;
                            for m in 0..k {
                                let pos = t + m;
                                if pos < left || pos - left >= len {
                                    continue;
                                }
                                let xi = ci * len + pos - left;
                                grad_params[base + m] += go * x[xi];
                                gi[xi] += go * params[base + m];
                            }
                        }
                    }
                }
            }
        }
        LayerKind::Conv2d {
            out_channels,
            kernel_height: kh,
            kernel_width: kw,
            stride,
            bias,
        } => {
            let (cin, h, w) = (spec.in_shape[0], spec.in_shape[1], spec.in_shape[2]);
            let (oh, ow) = (spec.out_shape[1], spec.out_shape[2]);
            let nw = out_channels * cin * kh * kw;
            for b in 0..batch {
                let x = &input[b * in_len..(b + 1) * in_len];
                let g = &grad_out[b * out_len..(b + 1) * out_len];
                let gi = &mut grad_in[b * in_len..(b + 1) * in_len];
                for co in 0..out_channels {
                    let gplane = &g[co * oh * ow..(co + 1) * oh * ow];
                    if bias {
                        grad_params[nw + co] += gplane.iter().sum::<f64>();
                    }
                    for ci in 0..cin {
                        let xplane = &x[ci * h * w..(ci + 1) * h * w];
                        let giplane = &mut gi[ci * h * w..(ci + 1) * h * w];
                        let kbase = (co * cin + ci) * kh * kw;
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let wv = params[kbase + ky * kw + kx];
                                let mut acc = 0.0;
                                for oy in 0..oh {
                                    let row = (oy * stride + ky) * w;
                                    let grow = &gplane[oy * ow..(oy + 1) * ow];
                                    for (ox, &gv) in grow.iter().enumerate() {
                                        let xi = row + ox * stride + kx;
                                        acc += gv * xplane[xi];
                                        giplane[xi] += gv * wv;
                                    }
                                }
                                grad_params[kbase + ky * kw + kx] += acc;
                            }
                        }
                    }
                }
            }
        }
        LayerKind::Relu => {
            // Subgradient 0 at the kink.
            for ((gi, &go), &x) in grad_in.iter_mut().zip(grad_out).zip(input) {
                *gi = if x > 0.0 { go } else { 0.0 };
            }
        }
        LayerKind::Sigmoid => {
            for ((gi, &go), &y) in grad_in.iter_mut().zip(grad_out).zip(output) {
                *gi = go * y * (1.0 - y);
            }
        }
        LayerKind::Identity => grad_in.copy_from_slice(grad_out),
        LayerKind::Softmax => {
            for b in 0..batch {
                let y = &output[b * out_len..(b + 1) * out_len];
                let g = &grad_out[b * out_len..(b + 1) * out_len];
                let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
                let gi = &mut grad_in[b * in_len..(b + 1) * in_len];
                for i in 0..in_len {
                    gi[i] = y[i] * (g[i] - dot);
                }
            }
        }
    }
    grad_in
}
