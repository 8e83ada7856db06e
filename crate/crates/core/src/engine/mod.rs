//! Reverse-mode differentiation over a fixed layer vocabulary.
//!
//! A [`Network`] is a sequential stack of [`LayerSpec`]s sharing one flat
//! parameter vector. The batch dimension always leads.

mod finite_diff;
mod layer;
mod loss;
mod network;
mod ops;
mod sgd;
mod tensor;

pub use finite_diff::finite_diff_grad;
pub use layer::{LayerKind, LayerSpec, Padding1d};
pub use loss::{loss_eval, LossKind};
pub use network::{
    one_hidden_relu, params_digest, ForwardCache, Gradients, InitScheme, Network, NetworkBuilder,
    NetworkDoc,
};
pub use sgd::{sgd_step, sgd_step_in_place};
pub use tensor::Tensor;

#[allow(unused_imports)]
pub(crate) use ops::sigmoid;
