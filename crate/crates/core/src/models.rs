//! Canonical architectures shared by the diagnostics and the experiments.

use serde::{Deserialize, Serialize};

use crate::engine::{InitScheme, LayerKind, Network, NetworkBuilder};
use crate::error::Result;

/// Scale of the image network: the full 28x28 variant or the reduced
/// 16x16 one with half the convolution channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageScale {
    Full,
    Small,
}

impl ImageScale {
    pub fn image_size(self) -> usize {
        match self {
            ImageScale::Full => 28,
            ImageScale::Small => 16,
        }
    }

    fn channels(self) -> (usize, usize) {
        match self {
            ImageScale::Full => (8, 16),
            ImageScale::Small => (4, 8),
        }
    }
}

/// LeNet-like scorer: conv 5x5 -> relu -> strided 2x2 conv pool ->
/// conv 5x5 -> relu -> strided pool -> dense 64 -> relu -> dense 1.
pub fn lenet_scorer(scale: ImageScale, seed: u64) -> Result<Network> {
    let s = scale.image_size();
    let (c1, c2) = scale.channels();
    NetworkBuilder::new(vec![1, s, s])
        .layer(LayerKind::conv2d(c1, 5, 1))
        .relu()
        .layer(LayerKind::conv2d(c1, 2, 2))
        .layer(LayerKind::conv2d(c2, 5, 1))
        .relu()
        .layer(LayerKind::conv2d(c2, 2, 2))
        .dense(64)
        .relu()
        .dense(1)
        .build(InitScheme::UniformFanIn, seed)
}

/// One hidden ReLU layer of width `10 d` and a linear scalar output.
pub fn parity_learner(d: usize, seed: u64) -> Result<Network> {
    NetworkBuilder::new(vec![d])
        .dense(10 * d)
        .relu()
        .dense(1)
        .build(InitScheme::UniformFanIn, seed)
}

/// Dense `d -> k` followed by a softmax.
pub fn simplex_head(d: usize, k: usize, seed: u64) -> Result<Network> {
    NetworkBuilder::new(vec![d])
        .dense(k)
        .softmax()
        .build(InitScheme::UniformFanIn, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        let full = lenet_scorer(ImageScale::Full, 0).unwrap();
        assert_eq!(full.input_shape(), &[1, 28, 28]);
        assert_eq!(full.output_len(), 1);
        let small = lenet_scorer(ImageScale::Small, 0).unwrap();
        assert_eq!(small.input_shape(), &[1, 16, 16]);
        assert_eq!(
            parity_learner(5, 0).unwrap().param_count(),
            5 * 50 + 50 + 51
        );
        assert_eq!(simplex_head(4, 3, 0).unwrap().output_len(), 3);
    }
}
