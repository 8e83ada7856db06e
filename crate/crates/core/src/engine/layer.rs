use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Zero padding policy for 1-D convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding1d {
    /// No padding; output length `L - K + 1`.
    Valid,
    /// Centered padding; output length `L`.
    Same,
    /// All `K - 1` zeros on the left; output length `L`, and output `t`
    /// only sees inputs `<= t`.
    Causal,
}

impl Padding1d {
    pub(crate) fn amounts(self, kernel: usize) -> (usize, usize) {
        match self {
            Padding1d::Valid => (0, 0),
            Padding1d::Same => {
                let left = (kernel - 1) / 2;
                (left, kernel - 1 - left)
            }
            Padding1d::Causal => (kernel - 1, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    /// Fully connected layer over the flattened sample.
    Dense {
        width: usize,
        bias: bool,
    },
    /// Input `[channels, length]`.
    Conv1d {
        out_channels: usize,
        kernel_length: usize,
        padding: Padding1d,
        bias: bool,
    },
    /// Input `[channels, height, width]`, valid padding.
    Conv2d {
        out_channels: usize,
        kernel_height: usize,
        kernel_width: usize,
        stride: usize,
        bias: bool,
    },
    Relu,
    Sigmoid,
    Identity,
    /// Softmax over the flattened sample.
    Softmax,
}

impl LayerKind {
    pub fn dense(width: usize) -> Self {
        LayerKind::Dense { width, bias: true }
    }

    pub fn dense_no_bias(width: usize) -> Self {
        LayerKind::Dense { width, bias: false }
    }

    pub fn conv2d(out_channels: usize, kernel: usize, stride: usize) -> Self {
        LayerKind::Conv2d {
            out_channels,
            kernel_height: kernel,
            kernel_width: kernel,
            stride,
            bias: true,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Dense { .. } => "dense",
            LayerKind::Conv1d { .. } => "conv1d",
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::Relu => "relu",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::Identity => "identity",
            LayerKind::Softmax => "softmax",
        }
    }

    /// Output shape for a given per-sample input shape.
    pub fn output_shape(&self, in_shape: &[usize]) -> Result<Vec<usize>> {
        if in_shape.is_empty() || in_shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!("invalid input shape {in_shape:?}")));
        }
        match *self {
            LayerKind::Dense { width, .. } => {
                if width == 0 {
                    return Err(Error::shape("dense layer with zero width"));
                }
                Ok(vec![width])
            }
            LayerKind::Conv1d {
                out_channels,
                kernel_length,
                padding,
                ..
            } => {
                let &[_, len] = in_shape else {
                    return Err(Error::shape(format!(
                        "conv1d expects [channels, length], got {in_shape:?}"
                    )));
                };
                if out_channels == 0 || kernel_length == 0 {
                    return Err(Error::shape("conv1d with zero channels or kernel"));
                }
                let (l, r) = padding.amounts(kernel_length);
                let padded = len + l + r;
                if padded < kernel_length {
                    return Err(Error::shape(format!(
                        "conv1d kernel {kernel_length} longer than padded input {padded}"
                    )));
                }
                Ok(vec![out_channels, padded - kernel_length + 1])
            }
            LayerKind::Conv2d {
                out_channels,
                kernel_height,
                kernel_width,
                stride,
                ..
            } => {
                let &[_, h, w] = in_shape else {
                    return Err(Error::shape(format!(
                        "conv2d expects [channels, height, width], got {in_shape:?}"
                    )));
                };
                if out_channels == 0 || kernel_height == 0 || kernel_width == 0 || stride == 0 {
                    return Err(Error::shape("conv2d with a zero-sized parameter"));
                }
                if h < kernel_height || w < kernel_width {
                    return Err(Error::shape(format!(
                        "conv2d kernel {kernel_height}x{kernel_width} larger than input {h}x{w}"
                    )));
                }
                Ok(vec![
                    out_channels,
                    (h - kernel_height) / stride + 1,
                    (w - kernel_width) / stride + 1,
                ])
            }
            LayerKind::Relu | LayerKind::Sigmoid | LayerKind::Identity | LayerKind::Softmax => {
                Ok(in_shape.to_vec())
            }
        }
    }

    /// Number of weights and biases for a given input shape.
    pub fn param_count(&self, in_shape: &[usize]) -> usize {
        let in_len: usize = in_shape.iter().product();
        match *self {
            LayerKind::Dense { width, bias } => width * in_len + if bias { width } else { 0 },
            LayerKind::Conv1d {
                out_channels,
                kernel_length,
                bias,
                ..
            } => out_channels * in_shape[0] * kernel_length + if bias { out_channels } else { 0 },
            LayerKind::Conv2d {
                out_channels,
                kernel_height,
                kernel_width,
                bias,
                ..
            } => {
                out_channels * in_shape[0] * kernel_height * kernel_width
                    + if bias { out_channels } else { 0 }
            }
            _ => 0,
        }
    }

    /// Fan-in of one output unit, used by the default initializer.
    pub fn fan_in(&self, in_shape: &[usize]) -> usize {
        match *self {
            LayerKind::Dense { .. } => in_shape.iter().product(),
            LayerKind::Conv1d { kernel_length, .. } => in_shape[0] * kernel_length,
            LayerKind::Conv2d {
                kernel_height,
                kernel_width,
                ..
            } => in_shape[0] * kernel_height * kernel_width,
            _ => 0,
        }
    }

    /// Number of leading parameters that are weights (the rest are biases).
    pub fn weight_count(&self, in_shape: &[usize]) -> usize {
        let total = self.param_count(in_shape);
        match *self {
            LayerKind::Dense { width, bias: true } => total - width,
            LayerKind::Conv1d {
                out_channels,
                bias: true,
                ..
            }
            | LayerKind::Conv2d {
                out_channels,
                bias: true,
                ..
            } => total - out_channels,
            _ => total,
        }
    }
}

/// A layer with its resolved per-sample input and output shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, in_shape: Vec<usize>) -> Result<Self> {
        let out_shape = kind.output_shape(&in_shape)?;
        Ok(Self {
            kind,
            in_shape,
            out_shape,
        })
    }

    pub fn in_len(&self) -> usize {
        self.in_shape.iter().product()
    }

    pub fn out_len(&self) -> usize {
        self.out_shape.iter().product()
    }

    pub fn param_count(&self) -> usize {
        self.kind.param_count(&self.in_shape)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let expected = self.kind.output_shape(&self.in_shape)?;
        if expected != self.out_shape {
            return Err(Error::shape(format!(
                "{} layer with input {:?} produces {:?}, spec says {:?}",
                self.kind.name(),
                self.in_shape,
                expected,
                self.out_shape
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_shapes() {
        let same = LayerKind::Conv1d {
            out_channels: 1,
            kernel_length: 3,
            padding: Padding1d::Same,
            bias: false,
        };
        assert_eq!(same.output_shape(&[1, 100]).unwrap(), vec![1, 100]);
        let valid = LayerKind::Conv1d {
            out_channels: 2,
            kernel_length: 3,
            padding: Padding1d::Valid,
            bias: true,
        };
        assert_eq!(valid.output_shape(&[1, 10]).unwrap(), vec![2, 8]);
        assert_eq!(valid.param_count(&[1, 10]), 2 * 3 + 2);

        let c2 = LayerKind::conv2d(8, 5, 1);
        assert_eq!(c2.output_shape(&[1, 28, 28]).unwrap(), vec![8, 24, 24]);
        let pool = LayerKind::conv2d(8, 2, 2);
        assert_eq!(pool.output_shape(&[8, 24, 24]).unwrap(), vec![8, 12, 12]);
        assert!(c2.output_shape(&[28, 28]).is_err());
    }
}
