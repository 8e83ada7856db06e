use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layer::{LayerKind, LayerSpec};
use super::loss::{loss_eval, LossKind};
use super::ops;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng;

/// Parameter initialization scheme.
///
/// Biases always start at zero; the scheme only decides the weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum InitScheme {
    Zeros,
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    UniformFanIn,
    Uniform {
        limit: f64,
    },
    Normal {
        std: f64,
    },
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::UniformFanIn
    }
}

/// A feed-forward stack of layers over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<LayerSpec>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    init_scheme: InitScheme,
}

/// Activations recorded by [`Network::forward`] and consumed by
/// [`Network::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    /// `activations[i]` is the input of layer `i`; the last entry is the output.
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// The cache restricted to sample `b`, as if it had been run alone.
    pub fn sample(&self, b: usize) -> Result<ForwardCache> {
        if b >= self.batch {
            return Err(Error::invalid(format!(
                "sample {b} outside batch {}",
                self.batch
            )));
        }
        let activations = self
            .activations
            .iter()
            .map(|a| {
                let w = a.len() / self.batch;
                a[b * w..(b + 1) * w].to_vec()
            })
            .collect();
        Ok(ForwardCache {
            batch: 1,
            activations,
        })
    }

    /// Output of layer `i` (input of layer `i + 1`).
    pub fn layer_output(&self, i: usize) -> &[f64] {
        &self.activations[i + 1]
    }

    pub fn layer_input(&self, i: usize) -> &[f64] {
        &self.activations[i]
    }
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<f64>,
    /// Gradient with respect to the network input, `[batch, in_len]` flat.
    pub input: Vec<f64>,
}

/// On-disk form of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDoc {
    pub layers: Vec<LayerSpec>,
    pub init_scheme: InitScheme,
    pub params: Vec<f64>,
}

impl Network {
    /// Build a network from resolved layer specs and draw its parameters.
    pub fn new(layers: Vec<LayerSpec>, scheme: InitScheme, seed: u64) -> Result<Self> {
        let mut net = Self::with_zero_params(layers, scheme)?;
        net.reinit(scheme, seed);
        Ok(net)
    }

    fn with_zero_params(layers: Vec<LayerSpec>, scheme: InitScheme) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("a network needs at least one layer"));
        }
        for (i, layer) in layers.iter().enumerate() {
            layer.validate()?;
            if i > 0 && layers[i - 1].out_shape != layer.in_shape {
                return Err(Error::shape(format!(
                    "layer {} ({}) outputs {:?} but layer {} ({}) expects {:?}",
                    i - 1,
                    layers[i - 1].kind.name(),
                    layers[i - 1].out_shape,
                    i,
                    layer.kind.name(),
                    layer.in_shape
                )));
            }
        }
        let mut offsets = Vec::with_capacity(layers.len() + 1);
        let mut total = 0;
        for layer in &layers {
            offsets.push(total);
            total += layer.param_count();
        }
        offsets.push(total);
        Ok(Self {
            layers,
            offsets,
            params: vec![0.0; total],
            init_scheme: scheme,
        })
    }

    /// Redraw all parameters from `scheme`.
    pub fn reinit(&mut self, scheme: InitScheme, seed: u64) {
        self.init_scheme = scheme;
        let mut rng = rng::seeded(seed);
        for (i, layer) in self.layers.iter().enumerate() {
            let range = self.offsets[i]..self.offsets[i + 1];
            let n_weights = layer.kind.weight_count(&layer.in_shape);
            let slice = &mut self.params[range];
            let (weights, biases) = slice.split_at_mut(n_weights);
            biases.iter_mut().for_each(|b| *b = 0.0);
            match scheme {
                InitScheme::Zeros => weights.iter_mut().for_each(|w| *w = 0.0),
                InitScheme::UniformFanIn => {
                    let fan_in = layer.kind.fan_in(&layer.in_shape).max(1) as f64;
                    let limit = 1.0 / fan_in.sqrt();
                    for w in weights.iter_mut() {
                        *w = rng.random_range(-limit..=limit);
                    }
                }
                InitScheme::Uniform { limit } => {
                    for w in weights.iter_mut() {
                        *w = if limit > 0.0 {
                            rng.random_range(-limit..=limit)
                        } else {
                            0.0
                        };
                    }
                }
                InitScheme::Normal { std } => {
                    let normal = Normal::new(0.0, std.max(0.0)).expect("std is non-negative");
                    for w in weights.iter_mut() {
                        *w = normal.sample(&mut rng);
                    }
                }
            }
        }
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn init_scheme(&self) -> InitScheme {
        self.init_scheme
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        self.params = params;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Range of the flat parameter vector owned by layer `i`.
    pub fn layer_params(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.layers[0].in_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.layers[self.layers.len() - 1].out_shape
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].in_len()
    }

    pub fn output_len(&self) -> usize {
        self.layers[self.layers.len() - 1].out_len()
    }

    fn check_input(&self, batch: &Tensor) -> Result<usize> {
        if batch.shape().len() < 2 {
            return Err(Error::shape(format!(
                "batch needs a leading batch dimension, got shape {:?}",
                batch.shape()
            )));
        }
        if batch.sample_len() != self.input_len() {
            return Err(Error::shape(format!(
                "network expects samples of shape {:?}, got {:?}",
                self.input_shape(),
                batch.sample_shape()
            )));
        }
        Ok(batch.batch_size())
    }

    /// Run the batch through every layer, keeping activations for backward.
    pub fn forward(&self, batch: &Tensor) -> Result<(Tensor, ForwardCache)> {
        let n = self.check_input(batch)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(batch.data().to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let out = ops::forward(
                layer,
                &self.params[self.layer_params(i)],
                activations.last().expect("non-empty"),
                n,
            );
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "activation after layer {i} ({})",
                    layer.kind.name()
                )));
            }
            activations.push(out);
        }
        let mut shape = vec![n];
        shape.extend_from_slice(self.output_shape());
        let out = Tensor::from_parts_unchecked(shape, activations.last().unwrap().clone());
        Ok((
            out,
            ForwardCache {
                batch: n,
                activations,
            },
        ))
    }

    /// Forward pass without retaining activations.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        let n = self.check_input(batch)?;
        let mut current = batch.data().to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            current = ops::forward(layer, &self.params[self.layer_params(i)], &current, n);
        }
        if current.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        let mut shape = vec![n];
        shape.extend_from_slice(self.output_shape());
        Ok(Tensor::from_parts_unchecked(shape, current))
    }

    /// Chain rule from an upstream gradient on the output back to every parameter.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Tensor) -> Result<Gradients> {
        if cache.activations.len() != self.layers.len() + 1
            || cache.activations[0].len() != cache.batch * self.input_len()
        {
            return Err(Error::MissingCache);
        }
        if upstream.len() != cache.batch * self.output_len() {
            return Err(Error::shape(format!(
                "upstream gradient has {} values, expected {}",
                upstream.len(),
                cache.batch * self.output_len()
            )));
        }
        let mut grad_params = vec![0.0; self.params.len()];
        let mut grad = upstream.data().to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let range = self.layer_params(i);
            grad = ops::backward(
                layer,
                &self.params[range.clone()],
                &cache.activations[i],
                &cache.activations[i + 1],
                &grad,
                &mut grad_params[range],
                cache.batch,
            );
        }
        Ok(Gradients {
            params: grad_params,
            input: grad,
        })
    }

    /// Parameter gradient of `upstream_b . output_b` for each sample `b`.
    pub fn per_sample_grads(&self, batch: &Tensor, upstream: &Tensor) -> Result<Vec<Vec<f64>>> {
        let (_, cache) = self.forward(batch)?;
        let m = self.output_len();
        if upstream.len() != cache.batch * m {
            return Err(Error::shape(format!(
                "upstream gradient has {} values, expected {}",
                upstream.len(),
                cache.batch * m
            )));
        }
        (0..cache.batch)
            .map(|b| {
                let one = cache.sample(b)?;
                let up = Tensor::from_parts_unchecked(
                    vec![1, m],
                    upstream.data()[b * m..(b + 1) * m].to_vec(),
                );
                Ok(self.backward(&one, &up)?.params)
            })
            .collect()
    }

    /// Mean loss over the batch and its parameter gradient.
    pub fn loss_and_grad(
        &self,
        batch: &Tensor,
        targets: &Tensor,
        loss: LossKind,
    ) -> Result<(f64, Vec<f64>)> {
        let (pred, cache) = self.forward(batch)?;
        let (value, upstream) = loss_eval(loss, &pred, targets)?;
        let grads = self.backward(&cache, &upstream)?;
        Ok((value, grads.params))
    }

    pub fn loss(&self, batch: &Tensor, targets: &Tensor, loss: LossKind) -> Result<f64> {
        let pred = self.predict(batch)?;
        Ok(loss_eval(loss, &pred, targets)?.0)
    }

    pub fn to_doc(&self) -> NetworkDoc {
        NetworkDoc {
            layers: self.layers.clone(),
            init_scheme: self.init_scheme,
            params: self.params.clone(),
        }
    }

    pub fn from_doc(doc: NetworkDoc) -> Result<Self> {
        let mut net = Self::with_zero_params(doc.layers, doc.init_scheme)?;
        net.set_params(doc.params)?;
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_doc())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_doc(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 over the little-endian parameter bytes.
    pub fn params_digest(&self) -> String {
        params_digest(&self.params)
    }
}

pub fn params_digest(params: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for p in params {
        hasher.update(p.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Incremental construction of a [`Network`] from an input shape.
#[derive(Debug)]
pub struct NetworkBuilder {
    shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    error: Option<Error>,
}

impl NetworkBuilder {
    pub fn new(input_shape: Vec<usize>) -> Self {
        Self {
            shape: input_shape,
            layers: Vec::new(),
            error: None,
        }
    }

    pub fn layer(mut self, kind: LayerKind) -> Self {
        if self.error.is_some() {
            return self;
        }
        match LayerSpec::new(kind, self.shape.clone()) {
            Ok(spec) => {
                self.shape = spec.out_shape.clone();
                self.layers.push(spec);
            }
            Err(e) => self.error = Some(e),
        }
        self
    }

    pub fn dense(self, width: usize) -> Self {
        self.layer(LayerKind::dense(width))
    }

    pub fn relu(self) -> Self {
        self.layer(LayerKind::Relu)
    }

    pub fn sigmoid(self) -> Self {
        self.layer(LayerKind::Sigmoid)
    }

    pub fn softmax(self) -> Self {
        self.layer(LayerKind::Softmax)
    }

    pub fn specs(self) -> Result<Vec<LayerSpec>> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.layers),
        }
    }

    pub fn build(self, scheme: InitScheme, seed: u64) -> Result<Network> {
        Network::new(self.specs()?, scheme, seed)
    }
}

/// One hidden ReLU layer of `width` units and a single linear output.
pub fn one_hidden_relu(
    input: usize,
    width: usize,
    scheme: InitScheme,
    seed: u64,
) -> Result<Network> {
    NetworkBuilder::new(vec![input])
        .dense(width)
        .relu()
        .dense(1)
        .build(scheme, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Padding1d;

    fn lenet_specs() -> Vec<LayerSpec> {
        NetworkBuilder::new(vec![1, 28, 28])
            .layer(LayerKind::conv2d(8, 5, 1))
            .relu()
            .layer(LayerKind::conv2d(8, 2, 2))
            .layer(LayerKind::conv2d(16, 5, 1))
            .relu()
            .layer(LayerKind::conv2d(16, 2, 2))
            .dense(64)
            .relu()
            .dense(1)
            .specs()
            .unwrap()
    }

    #[test]
    fn zero_init_dense() {
        let net = NetworkBuilder::new(vec![2])
            .dense(1)
            .build(InitScheme::Zeros, 3)
            .unwrap();
        assert_eq!(net.params(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn init_is_deterministic() {
        let scheme = InitScheme::Uniform {
            limit: 1.0 / 3f64.sqrt(),
        };
        let a = NetworkBuilder::new(vec![3])
            .dense(2)
            .build(scheme, 11)
            .unwrap();
        let b = NetworkBuilder::new(vec![3])
            .dense(2)
            .build(scheme, 11)
            .unwrap();
        assert_eq!(a.params(), b.params());
        let c = NetworkBuilder::new(vec![3])
            .dense(2)
            .build(scheme, 12)
            .unwrap();
        assert_ne!(a.params(), c.params());
        let limit = 1.0 / 3f64.sqrt();
        assert!(a.params()[..6].iter().all(|w| w.abs() <= limit));
        assert!(a.params()[6..].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn lenet_parameter_count_matches_hand_count() {
        // conv 1->8 5x5: 8*25+8; pool 8->8 2x2: 8*8*4+8; conv 8->16 5x5: 16*8*25+16;
        // pool 16->16 2x2: 16*16*4+16; dense 16*4*4->64: 256*64+64; dense 64->1: 64+1.
        let hand = (8 * 25 + 8)
            + (8 * 8 * 4 + 8)
            + (16 * 8 * 25 + 16)
            + (16 * 16 * 4 + 16)
            + (256 * 64 + 64)
            + (64 + 1);
        let net = Network::new(lenet_specs(), InitScheme::UniformFanIn, 0).unwrap();
        assert_eq!(net.param_count(), hand);
        assert_eq!(net.layers()[5].out_shape, vec![16, 4, 4]);
    }

    #[test]
    fn rejects_broken_chain() {
        let a = LayerSpec::new(LayerKind::dense(4), vec![3]).unwrap();
        let b = LayerSpec::new(LayerKind::dense(2), vec![5]).unwrap();
        assert!(matches!(
            Network::new(vec![a, b], InitScheme::Zeros, 0),
            Err(Error::Shape(_))
        ));
        let mut bad = LayerSpec::new(LayerKind::dense(4), vec![3]).unwrap();
        bad.out_shape = vec![5];
        assert!(Network::new(vec![bad], InitScheme::Zeros, 0).is_err());
    }

    #[test]
    fn identity_dense_passes_input_through() {
        let mut net = NetworkBuilder::new(vec![3])
            .dense(3)
            .build(InitScheme::Zeros, 0)
            .unwrap();
        let mut p = vec![0.0; 12];
        for i in 0..3 {
            p[i * 3 + i] = 1.0;
        }
        net.set_params(p).unwrap();
        let x = Tensor::new(vec![1, 3], vec![0.5, -2.0, 7.0]).unwrap();
        assert_eq!(net.predict(&x).unwrap().data(), x.data());
    }

    #[test]
    fn activations_by_definition() {
        let relu = NetworkBuilder::new(vec![3])
            .relu()
            .build(InitScheme::Zeros, 0)
            .unwrap();
        let x = Tensor::new(vec![1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu.predict(&x).unwrap().data(), &[0.0, 0.0, 2.0]);
        let sig = NetworkBuilder::new(vec![1])
            .sigmoid()
            .build(InitScheme::Zeros, 0)
            .unwrap();
        let z = Tensor::new(vec![1, 1], vec![0.0]).unwrap();
        assert_eq!(sig.predict(&z).unwrap().data(), &[0.5]);
    }

    #[test]
    fn hand_chain_rule_for_linear_model() {
        // loss = 1/2 (w.x - y)^2 at x = (1, 2), y = 0, w = (1, 1): yhat = 3, grad = (3, 6).
        let mut net = NetworkBuilder::new(vec![2])
            .layer(LayerKind::dense_no_bias(1))
            .build(InitScheme::Zeros, 0)
            .unwrap();
        net.set_params(vec![1.0, 1.0]).unwrap();
        let x = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let y = Tensor::new(vec![1, 1], vec![0.0]).unwrap();
        let (loss, g) = net.loss_and_grad(&x, &y, LossKind::Square).unwrap();
        assert_eq!(loss, 4.5);
        assert_eq!(g, vec![3.0, 6.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let net = one_hidden_relu(4, 6, InitScheme::UniformFanIn, 5).unwrap();
        let x = Tensor::new(vec![2, 4], (0..8).map(|i| i as f64 * 0.3 - 1.0).collect()).unwrap();
        let (_, cache) = net.forward(&x).unwrap();
        let g = net
            .backward(&cache, &Tensor::zeros(vec![2, 1]).unwrap())
            .unwrap();
        assert!(g.params.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_cache_is_reported() {
        let a = one_hidden_relu(4, 6, InitScheme::UniformFanIn, 5).unwrap();
        let b = NetworkBuilder::new(vec![4])
            .dense(1)
            .build(InitScheme::Zeros, 0)
            .unwrap();
        let x = Tensor::zeros(vec![2, 4]).unwrap();
        let (_, cache) = b.forward(&x).unwrap();
        let up = Tensor::zeros(vec![2, 1]).unwrap();
        assert!(matches!(a.backward(&cache, &up), Err(Error::MissingCache)));
    }

    #[test]
    fn causal_conv_realizes_second_difference() {
        let mut net = NetworkBuilder::new(vec![1, 6])
            .layer(LayerKind::Conv1d {
                out_channels: 1,
                kernel_length: 3,
                padding: Padding1d::Causal,
                bias: false,
            })
            .build(InitScheme::Zeros, 0)
            .unwrap();
        net.set_params(vec![1.0, -2.0, 1.0]).unwrap();
        let f = Tensor::new(vec![1, 1, 6], vec![1.0, 2.0, 3.0, 2.0, 1.0, 0.0]).unwrap();
        let p = net.predict(&f).unwrap();
        assert_eq!(p.data(), &[1.0, 0.0, 0.0, -2.0, 0.0, 0.0]);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let net = Network::new(lenet_specs(), InitScheme::UniformFanIn, 99).unwrap();
        let back = Network::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.params_digest(), net.params_digest());
    }
}
