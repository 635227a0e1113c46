//! Minimal neural-network engine.
//!
//! Just enough machinery for the two detector architectures: Conv2D,
//! MaxPool2D, ConvT2D, ZeroPad2D, Dense, Flatten/Reshape, and elementwise
//! activations, trained with Adam. Shapes are checked once at
//! construction by a static shape function and again implicitly by every
//! forward pass. Parameters live in f64 while training; they are rounded
//! to f32 at checkpoint boundaries.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{bce, bce_grad, mse, mse_grad};
pub use tensor::Tensor;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Valid,
    Explicit(usize),
}

impl Padding {
    fn amount(self) -> usize {
        match self {
            Padding::Valid => 0,
            Padding::Explicit(p) => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    ReLU,
    Sigmoid,
    Linear,
}

/// One layer of the architecture. Convolutions are square-kernel;
/// MaxPool2D is fixed at 2x2/stride 2 in floor mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv2D {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    },
    MaxPool2D,
    ConvT2D {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    },
    ZeroPad2D {
        top: usize,
        bottom: usize,
        left: usize,
        right: usize,
    },
    Dense {
        out_features: usize,
    },
    Flatten,
    Reshape {
        shape: Vec<usize>,
    },
    Activation(Activation),
}

impl LayerSpec {
    /// Static shape function: output shape for a given input shape, or a
    /// shape error naming this layer.
    pub fn output_shape(&self, layer_idx: usize, input: &[usize]) -> Result<Vec<usize>> {
        let fail = |msg: String| Err(Error::shape(layer_idx, msg));
        match self {
            LayerSpec::Conv2D {
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let [h, w, _c] = spatial3(layer_idx, input)?;
                let p = padding.amount();
                if h + 2 * p < *kernel || w + 2 * p < *kernel {
                    return fail(format!(
                        "conv kernel {kernel} does not fit input {input:?} with padding {p}"
                    ));
                }
                let oh = (h + 2 * p - kernel) / stride + 1;
                let ow = (w + 2 * p - kernel) / stride + 1;
                Ok(vec![oh, ow, *out_channels])
            }
            LayerSpec::MaxPool2D => {
                let [h, w, c] = spatial3(layer_idx, input)?;
                if h < 2 || w < 2 {
                    return fail(format!("maxpool needs at least 2x2 input, got {input:?}"));
                }
                Ok(vec![h / 2, w / 2, c])
            }
            LayerSpec::ConvT2D {
                out_channels,
                kernel,
                stride,
                padding,
                output_padding,
            } => {
                let [h, w, _c] = spatial3(layer_idx, input)?;
                let oh = (h - 1) * stride + kernel + output_padding;
                let ow = (w - 1) * stride + kernel + output_padding;
                if oh < 2 * padding + 1 || ow < 2 * padding + 1 {
                    return fail(format!(
                        "convT padding {padding} swallows the whole output for input {input:?}"
                    ));
                }
                Ok(vec![oh - 2 * padding, ow - 2 * padding, *out_channels])
            }
            LayerSpec::ZeroPad2D {
                top,
                bottom,
                left,
                right,
            } => {
                let [h, w, c] = spatial3(layer_idx, input)?;
                Ok(vec![h + top + bottom, w + left + right, c])
            }
            LayerSpec::Dense { out_features } => {
                if input.len() != 1 {
                    return fail(format!("dense expects a flat input, got {input:?}"));
                }
                Ok(vec![*out_features])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Reshape { shape } => {
                let want: usize = shape.iter().product();
                let have: usize = input.iter().product();
                if want != have {
                    return fail(format!("cannot reshape {input:?} into {shape:?}"));
                }
                Ok(shape.clone())
            }
            LayerSpec::Activation(_) => Ok(input.to_vec()),
        }
    }

    /// (weight_len, bias_len) for this layer given its input shape.
    fn param_sizes(&self, layer_idx: usize, input: &[usize]) -> Result<(usize, usize)> {
        match self {
            LayerSpec::Conv2D {
                out_channels,
                kernel,
                ..
            }
            | LayerSpec::ConvT2D {
                out_channels,
                kernel,
                ..
            } => {
                let [_, _, c] = spatial3(layer_idx, input)?;
                Ok((kernel * kernel * c * out_channels, *out_channels))
            }
            LayerSpec::Dense { out_features } => {
                let inp: usize = input.iter().product();
                Ok((inp * out_features, *out_features))
            }
            _ => Ok((0, 0)),
        }
    }

    fn is_trainable(&self) -> bool {
        matches!(
            self,
            LayerSpec::Conv2D { .. } | LayerSpec::ConvT2D { .. } | LayerSpec::Dense { .. }
        )
    }
}

fn spatial3(layer_idx: usize, shape: &[usize]) -> Result<[usize; 3]> {
    match shape {
        [h, w, c] => Ok([*h, *w, *c]),
        other => Err(Error::shape(
            layer_idx,
            format!("expected [h, w, c] input, got {other:?}"),
        )),
    }
}

/// Weights and bias of one layer (empty for non-trainable layers).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A feed-forward network: layer specs, their parameters, and the shape
/// chain computed at construction.
#[derive(Debug, Clone)]
pub struct Network {
    pub layers: Vec<LayerSpec>,
    pub params: Vec<LayerParams>,
    /// Input shape plus the output shape of every layer.
    pub shapes: Vec<Vec<usize>>,
    pub seed: u64,
    /// Bumped on every parameter update; guards stale activations.
    generation: u64,
}

impl Network {
    /// Build a network, validating the whole shape chain and initializing
    /// parameters (He-uniform before ReLU, Glorot-uniform otherwise,
    /// biases zero).
    pub fn new(input_shape: &[usize], layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut shapes = vec![input_shape.to_vec()];
        for (i, layer) in layers.iter().enumerate() {
            let out = layer.output_shape(i, shapes.last().unwrap())?;
            shapes.push(out);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate() {
            let (w_len, b_len) = layer.param_sizes(i, &shapes[i])?;
            if w_len == 0 {
                params.push(LayerParams::default());
                continue;
            }
            let (fan_in, fan_out) = fans(layer, &shapes[i], &shapes[i + 1]);
            let limit = if followed_by_relu(&layers, i) {
                (6.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            };
            let weights = (0..w_len).map(|_| rng.gen_range(-limit..limit)).collect();
            params.push(LayerParams {
                weights,
                bias: vec![0.0; b_len],
            });
        }

        Ok(Network {
            layers,
            params,
            shapes,
            seed,
            generation: 0,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().unwrap()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn bump_generation(&mut self) {
        self.generation += 1;
    }

    /// Total trainable parameter count (matches the analytic
    /// k*k*in*out + out / in*out + out sums by construction).
    pub fn param_count(&self) -> usize {
        self.params.iter().map(LayerParams::len).sum()
    }

    /// Per-layer counts for trainable layers only, in layer order.
    pub fn param_counts_per_layer(&self) -> Vec<usize> {
        self.layers
            .iter()
            .zip(self.params.iter())
            .filter(|(spec, _)| spec.is_trainable())
            .map(|(_, p)| p.len())
            .collect()
    }

    /// Run the network, keeping every intermediate tensor for backward.
    pub fn forward(&self, x: &Tensor<f64>) -> Result<Activations> {
        if x.shape() != self.input_shape() {
            return Err(Error::shape(
                0,
                format!(
                    "input shape {:?} does not match network input {:?}",
                    x.shape(),
                    self.input_shape()
                ),
            ));
        }
        let mut tensors = Vec::with_capacity(self.layers.len() + 1);
        let mut pool_argmax: Vec<Option<Vec<usize>>> = Vec::with_capacity(self.layers.len());
        tensors.push(x.clone());

        for (i, layer) in self.layers.iter().enumerate() {
            let input = tensors.last().unwrap();
            let in_shape = input.shape().to_vec();
            let out_shape = &self.shapes[i + 1];
            let mut argmax = None;
            let data = match layer {
                LayerSpec::Conv2D {
                    kernel,
                    stride,
                    padding,
                    ..
                } => {
                    let [h, w, c] = spatial3(i, &in_shape)?;
                    layers::conv_forward(
                        input.data(),
                        (h, w, c),
                        &self.params[i].weights,
                        &self.params[i].bias,
                        *kernel,
                        *stride,
                        padding.amount(),
                        (out_shape[0], out_shape[1]),
                    )
                }
                LayerSpec::ConvT2D {
                    kernel,
                    stride,
                    padding,
                    ..
                } => {
                    let [h, w, c] = spatial3(i, &in_shape)?;
                    layers::convt_forward(
                        input.data(),
                        (h, w, c),
                        &self.params[i].weights,
                        &self.params[i].bias,
                        *kernel,
                        *stride,
                        *padding,
                        (out_shape[0], out_shape[1]),
                    )
                }
                LayerSpec::MaxPool2D => {
                    let [h, w, c] = spatial3(i, &in_shape)?;
                    let (y, arg) = layers::maxpool_forward(input.data(), (h, w, c));
                    argmax = Some(arg);
                    y
                }
                LayerSpec::ZeroPad2D {
                    top,
                    bottom,
                    left,
                    right,
                } => {
                    let [h, w, c] = spatial3(i, &in_shape)?;
                    layers::zeropad_forward(input.data(), (h, w, c), (*top, *bottom, *left, *right))
                }
                LayerSpec::Dense { .. } => layers::dense_forward(
                    input.data(),
                    &self.params[i].weights,
                    &self.params[i].bias,
                ),
                LayerSpec::Flatten | LayerSpec::Reshape { .. } => input.data().to_vec(),
                LayerSpec::Activation(act) => {
                    let mut v = input.data().to_vec();
                    match act {
                        Activation::ReLU => v.iter_mut().for_each(|x| *x = x.max(0.0)),
                        Activation::Sigmoid => {
                            v.iter_mut().for_each(|x| *x = 1.0 / (1.0 + (-*x).exp()))
                        }
                        Activation::Linear => {}
                    }
                    v
                }
            };
            tensors.push(Tensor::from_vec(out_shape, data)?);
            pool_argmax.push(argmax);
        }

        Ok(Activations {
            tensors,
            pool_argmax,
            generation: self.generation,
        })
    }

    /// Output of a plain forward pass.
    pub fn infer(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
        let mut acts = self.forward(x)?;
        Ok(acts.tensors.pop().unwrap())
    }

    /// Backpropagate `upstream` (gradient w.r.t. the network output)
    /// through recorded activations. Returns per-layer parameter
    /// gradients plus the gradient w.r.t. the input.
    pub fn backward(&self, acts: &Activations, upstream: &Tensor<f64>) -> Result<Gradients> {
        if acts.generation != self.generation {
            return Err(Error::State(
                "activations are stale: parameters changed since forward".into(),
            ));
        }
        if acts.tensors.len() != self.layers.len() + 1 {
            return Err(Error::State("activation record does not match network".into()));
        }
        if upstream.shape() != self.output_shape() {
            return Err(Error::shape(
                self.layers.len(),
                format!(
                    "upstream gradient shape {:?} does not match output {:?}",
                    upstream.shape(),
                    self.output_shape()
                ),
            ));
        }

        let mut grad = upstream.data().to_vec();
        let mut params = vec![LayerParams::default(); self.layers.len()];

        for i in (0..self.layers.len()).rev() {
            let input = &acts.tensors[i];
            let output = &acts.tensors[i + 1];
            let in_shape = input.shape().to_vec();
            let out_shape = output.shape();
            grad = match &self.layers[i] {
                LayerSpec::Conv2D {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    let [h, w, c] = spatial3(i, &in_shape)?;
                    let (dx, dw, db) = layers::conv_backward(
                        input.data(),
                        (h, w, c),
                        &self.params[i].weights,
                        *kernel,
                        *stride,
                        padding.amount(),
                        (out_shape[0], out_shape[1]),
                        *out_channels,
                        &grad,
                    );
                    params[i] = LayerParams {
                        weights: dw,
                        bias: db,
                    };
                    dx
                }
                LayerSpec::ConvT2D {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    ..
                } => {
                    let [h, w, c] = spatial3(i, &in_shape)?;
                    let (dx, dw, db) = layers::convt_backward(
                        input.data(),
                        (h, w, c),
                        &self.params[i].weights,
                        *kernel,
                        *stride,
                        *padding,
                        (out_shape[0], out_shape[1]),
                        *out_channels,
                        &grad,
                    );
                    params[i] = LayerParams {
                        weights: dw,
                        bias: db,
                    };
                    dx
                }
                LayerSpec::MaxPool2D => {
                    let arg = acts.pool_argmax[i]
                        .as_ref()
                        .ok_or_else(|| Error::State("missing maxpool argmax record".into()))?;
                    layers::maxpool_backward(&grad, arg, input.len())
                }
                LayerSpec::ZeroPad2D {
                    top,
                    bottom,
                    left,
                    right,
                } => {
                    let [h, w, c] = spatial3(i, &in_shape)?;
                    layers::zeropad_backward(&grad, (h, w, c), (*top, *bottom, *left, *right))
                }
                LayerSpec::Dense { out_features } => {
                    let (dx, dw, db) = layers::dense_backward(
                        input.data(),
                        &self.params[i].weights,
                        *out_features,
                        &grad,
                    );
                    params[i] = LayerParams {
                        weights: dw,
                        bias: db,
                    };
                    dx
                }
                LayerSpec::Flatten | LayerSpec::Reshape { .. } => grad,
                LayerSpec::Activation(act) => {
                    let mut g = grad;
                    match act {
                        Activation::ReLU => {
                            for (gv, &xv) in g.iter_mut().zip(input.data()) {
                                if xv <= 0.0 {
                                    *gv = 0.0;
                                }
                            }
                        }
                        Activation::Sigmoid => {
                            // Clamp matches the BCE prediction clip, so a
                            // saturated output still passes the fused
                            // cross-entropy gradient instead of underflowing
                            // to zero and freezing confidently-wrong units.
                            for (gv, &yv) in g.iter_mut().zip(output.data()) {
                                let y = yv.clamp(loss::BCE_CLIP, 1.0 - loss::BCE_CLIP);
                                *gv *= y * (1.0 - y);
                            }
                        }
                        Activation::Linear => {}
                    }
                    g
                }
            };
        }

        Ok(Gradients {
            params,
            input: Tensor::from_vec(&self.shapes[0], grad)?,
        })
    }
}

/// Kernel-based fan counts, Keras convention.
fn fans(layer: &LayerSpec, input: &[usize], _output: &[usize]) -> (usize, usize) {
    match layer {
        LayerSpec::Conv2D {
            out_channels,
            kernel,
            ..
        }
        | LayerSpec::ConvT2D {
            out_channels,
            kernel,
            ..
        } => {
            let c = input[2];
            (kernel * kernel * c, kernel * kernel * out_channels)
        }
        LayerSpec::Dense { out_features } => {
            let inp: usize = input.iter().product();
            (inp, *out_features)
        }
        _ => (1, 1),
    }
}

/// Whether the next activation layer after index i is a ReLU.
fn followed_by_relu(layers: &[LayerSpec], i: usize) -> bool {
    for layer in &layers[i + 1..] {
        if let LayerSpec::Activation(a) = layer {
            return *a == Activation::ReLU;
        }
    }
    false
}

/// Every intermediate tensor of one forward pass, plus max-pool winner
/// indices. Tied to the parameter generation that produced it.
#[derive(Debug, Clone)]
pub struct Activations {
    pub tensors: Vec<Tensor<f64>>,
    pool_argmax: Vec<Option<Vec<usize>>>,
    generation: u64,
}

impl Activations {
    pub fn output(&self) -> &Tensor<f64> {
        self.tensors.last().unwrap()
    }
}

/// Per-layer parameter gradients and the input gradient.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<LayerParams>,
    pub input: Tensor<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relu() -> LayerSpec {
        LayerSpec::Activation(Activation::ReLU)
    }

    #[test]
    fn conv_shape_chain_matches_static_function() {
        let net = Network::new(
            &[10, 12, 1],
            vec![
                LayerSpec::Conv2D {
                    out_channels: 4,
                    kernel: 3,
                    stride: 2,
                    padding: Padding::Valid,
                },
                relu(),
                LayerSpec::MaxPool2D,
                LayerSpec::Flatten,
                LayerSpec::Dense { out_features: 3 },
            ],
            0,
        )
        .unwrap();
        assert_eq!(net.shapes[1], vec![4, 5, 4]);
        assert_eq!(net.shapes[3], vec![2, 2, 4]);
        assert_eq!(net.shapes[5], vec![3]);
        let x = Tensor::zeros(&[10, 12, 1]);
        let acts = net.forward(&x).unwrap();
        for (t, s) in acts.tensors.iter().zip(net.shapes.iter()) {
            assert_eq!(t.shape(), &s[..]);
        }
    }

    #[test]
    fn forward_rejects_wrong_input_shape() {
        let net = Network::new(&[4, 4, 1], vec![LayerSpec::Flatten], 0).unwrap();
        let x = Tensor::zeros(&[5, 4, 1]);
        assert!(matches!(net.forward(&x), Err(Error::Shape { .. })));
    }

    #[test]
    fn shape_error_names_failing_layer() {
        let err = Network::new(
            &[4, 4, 1],
            vec![
                LayerSpec::MaxPool2D,
                LayerSpec::MaxPool2D,
                LayerSpec::MaxPool2D, // 1x1 input here
            ],
            0,
        )
        .unwrap_err();
        match err {
            Error::Shape { layer, .. } => assert_eq!(layer, 2),
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn param_count_matches_analytic_formula() {
        let net = Network::new(
            &[8, 8, 3],
            vec![
                LayerSpec::Conv2D {
                    out_channels: 5,
                    kernel: 3,
                    stride: 1,
                    padding: Padding::Valid,
                },
                relu(),
                LayerSpec::Flatten,
                LayerSpec::Dense { out_features: 2 },
            ],
            1,
        )
        .unwrap();
        let conv = 3 * 3 * 3 * 5 + 5;
        let dense = (6 * 6 * 5) * 2 + 2;
        assert_eq!(net.param_count(), conv + dense);
        assert_eq!(net.param_counts_per_layer(), vec![conv, dense]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = Network::new(
            &[6, 6, 1],
            vec![
                LayerSpec::Conv2D {
                    out_channels: 2,
                    kernel: 3,
                    stride: 1,
                    padding: Padding::Valid,
                },
                relu(),
                LayerSpec::Flatten,
                LayerSpec::Dense { out_features: 2 },
            ],
            2,
        )
        .unwrap();
        let x = Tensor::filled(&[6, 6, 1], 0.5);
        let acts = net.forward(&x).unwrap();
        let grads = net
            .backward(&acts, &Tensor::zeros(&[2]))
            .unwrap();
        for g in &grads.params {
            assert!(g.weights.iter().all(|&v| v == 0.0));
            assert!(g.bias.iter().all(|&v| v == 0.0));
        }
        assert!(grads.input.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_activations_rejected_after_update() {
        let mut net = Network::new(&[2, 2, 1], vec![LayerSpec::Flatten], 3).unwrap();
        let x = Tensor::zeros(&[2, 2, 1]);
        let acts = net.forward(&x).unwrap();
        net.bump_generation();
        let err = net.backward(&acts, &Tensor::zeros(&[4])).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn forward_is_deterministic_for_fixed_seed() {
        let mk = || {
            Network::new(
                &[5, 5, 1],
                vec![
                    LayerSpec::Conv2D {
                        out_channels: 3,
                        kernel: 3,
                        stride: 1,
                        padding: Padding::Valid,
                    },
                    relu(),
                    LayerSpec::Flatten,
                    LayerSpec::Dense { out_features: 1 },
                ],
                42,
            )
            .unwrap()
        };
        let a = mk();
        let b = mk();
        assert_eq!(a.params, b.params);
    }
}
