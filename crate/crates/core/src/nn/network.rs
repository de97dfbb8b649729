//! Layer specs, built layers and a sequential container with an explicit
//! forward trace for backpropagation.

use rand::Rng;

use super::activation::{activation_backward, activation_forward, Activation};
use super::conv::{
    conv2d_backward, conv2d_forward, conv2d_transpose_backward, conv2d_transpose_forward,
};
use super::dense::{dense_backward, dense_forward};
use super::params::{LayerParams, ParamGrads};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Architecture description of a single layer. Convolutions always use
/// "same" padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Dense {
        units: usize,
    },
    Conv2d {
        kernel: [usize; 2],
        filters: usize,
        stride: usize,
        bias: bool,
    },
    Conv2dTranspose {
        kernel: [usize; 2],
        filters: usize,
        stride: usize,
        bias: bool,
    },
    Activation(Activation),
    Flatten,
    /// Per-sample target shape (batch axis excluded).
    Reshape(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// `U(-l, l)` with `l = sqrt(6 / (fan_in + fan_out))`; biases zero.
    GlorotUniform,
    /// `U(-a, a)` for weights and biases alike.
    Uniform(f64),
}

/// Input gradient (if requested) and parameter gradients of one layer.
pub type LayerGrads<T> = (Option<Tensor<T>>, Option<ParamGrads<T>>);

/// Input gradient (if requested) and one parameter-gradient entry per layer.
pub type NetworkGrads<T> = (Option<Tensor<T>>, Vec<Option<ParamGrads<T>>>);

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T = f32> {
    Dense {
        name: String,
        params: LayerParams<T>,
    },
    Conv2d {
        name: String,
        params: LayerParams<T>,
        stride: usize,
    },
    Conv2dTranspose {
        name: String,
        params: LayerParams<T>,
        stride: usize,
    },
    Activation(Activation),
    Flatten,
    Reshape(Vec<usize>),
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, limit: f64) -> f64 {
    if limit == 0.0 {
        0.0
    } else {
        rng.random_range(-limit..limit)
    }
}

fn init_tensor<T: Scalar, R: Rng + ?Sized>(
    shape: Vec<usize>,
    limit: f64,
    rng: &mut R,
) -> Result<Tensor<T>> {
    let n = shape.iter().product();
    Tensor::new(
        shape,
        (0..n).map(|_| T::from_f64(uniform(rng, limit))).collect(),
    )
}

fn make_params<T: Scalar, R: Rng + ?Sized>(
    weight_shape: Vec<usize>,
    fan_in: usize,
    fan_out: usize,
    bias_len: Option<usize>,
    init: Init,
    rng: &mut R,
) -> Result<LayerParams<T>> {
    let (w_limit, b_limit) = match init {
        Init::GlorotUniform => ((6.0 / (fan_in + fan_out) as f64).sqrt(), 0.0),
        Init::Uniform(a) => (a, a),
    };
    let weights = init_tensor(weight_shape, w_limit, rng)?;
    let bias = bias_len
        .map(|n| init_tensor(vec![n], b_limit, rng))
        .transpose()?;
    Ok(LayerParams::new(weights, bias))
}

impl LayerSpec {
    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            LayerSpec::Dense { units } => match input {
                [_] => Ok(vec![*units]),
                s => Err(Error::shape(format!("dense needs a flat input, got {s:?}"))),
            },
            LayerSpec::Conv2d {
                filters, stride, ..
            } => match input {
                [h, w, _] if *stride > 0 => {
                    Ok(vec![h.div_ceil(*stride), w.div_ceil(*stride), *filters])
                }
                s => Err(Error::shape(format!("conv2d needs [h, w, c], got {s:?}"))),
            },
            LayerSpec::Conv2dTranspose {
                filters, stride, ..
            } => match input {
                [h, w, _] => Ok(vec![h * stride, w * stride, *filters]),
                s => Err(Error::shape(format!(
                    "conv2d_transpose needs [h, w, c], got {s:?}"
                ))),
            },
            LayerSpec::Activation(_) => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Reshape(target) => {
                if target.iter().product::<usize>() != input.iter().product::<usize>() {
                    return Err(Error::shape(format!(
                        "cannot reshape {input:?} into {target:?}"
                    )));
                }
                Ok(target.clone())
            }
        }
    }

    /// Instantiates the layer for a per-sample input shape.
    pub fn build<T: Scalar, R: Rng + ?Sized>(
        &self,
        name: &str,
        input: &[usize],
        init: Init,
        rng: &mut R,
    ) -> Result<Layer<T>> {
        let out = self.output_shape(input)?;
        Ok(match self {
            LayerSpec::Dense { units } => Layer::Dense {
                name: name.to_string(),
                params: make_params(
                    vec![input[0], *units],
                    input[0],
                    *units,
                    Some(*units),
                    init,
                    rng,
                )?,
            },
            LayerSpec::Conv2d {
                kernel: [kh, kw],
                filters,
                stride,
                bias,
            } => {
                let c = input[2];
                Layer::Conv2d {
                    name: name.to_string(),
                    params: make_params(
                        vec![*kh, *kw, c, *filters],
                        kh * kw * c,
                        kh * kw * filters,
                        bias.then_some(*filters),
                        init,
                        rng,
                    )?,
                    stride: *stride,
                }
            }
            LayerSpec::Conv2dTranspose {
                kernel: [kh, kw],
                filters,
                stride,
                bias,
            } => {
                let c = input[2];
                Layer::Conv2dTranspose {
                    name: name.to_string(),
                    params: make_params(
                        vec![*kh, *kw, *filters, c],
                        kh * kw * filters,
                        kh * kw * c,
                        bias.then_some(*filters),
                        init,
                        rng,
                    )?,
                    stride: *stride,
                }
            }
            LayerSpec::Activation(a) => Layer::Activation(*a),
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::Reshape(_) => Layer::Reshape(out),
        })
    }
}

impl<T: Scalar> Layer<T> {
    pub fn name(&self) -> Option<&str> {
        match self {
            Layer::Dense { name, .. }
            | Layer::Conv2d { name, .. }
            | Layer::Conv2dTranspose { name, .. } => Some(name),
            _ => None,
        }
    }

    pub fn params(&self) -> Option<&LayerParams<T>> {
        match self {
            Layer::Dense { params, .. }
            | Layer::Conv2d { params, .. }
            | Layer::Conv2dTranspose { params, .. } => Some(params),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<&mut LayerParams<T>> {
        match self {
            Layer::Dense { params, .. }
            | Layer::Conv2d { params, .. }
            | Layer::Conv2dTranspose { params, .. } => Some(params),
            _ => None,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Dense { params, .. } => dense_forward(params, x),
            Layer::Conv2d { params, stride, .. } => conv2d_forward(params, x, *stride),
            Layer::Conv2dTranspose { params, stride, .. } => {
                conv2d_transpose_forward(params, x, *stride)
            }
            Layer::Activation(a) => activation_forward(*a, x),
            Layer::Flatten => Ok(x.clone().flatten_batch()),
            Layer::Reshape(shape) => {
                let mut full = vec![x.batch()];
                full.extend_from_slice(shape);
                x.clone().reshape(full)
            }
        }
    }

    /// Gradients for one layer given its cached input and output.
    pub fn backward(
        &self,
        input: &Tensor<T>,
        output: &Tensor<T>,
        grad_out: &Tensor<T>,
        need_input_grad: bool,
    ) -> Result<LayerGrads<T>> {
        match self {
            Layer::Dense { params, .. } => {
                let (gx, g) = dense_backward(params, input, grad_out, need_input_grad)?;
                Ok((gx, Some(g)))
            }
            Layer::Conv2d { params, stride, .. } => {
                let (gx, g) = conv2d_backward(params, input, *stride, grad_out, need_input_grad)?;
                Ok((gx, Some(g)))
            }
            Layer::Conv2dTranspose { params, stride, .. } => {
                let (gx, g) =
                    conv2d_transpose_backward(params, input, *stride, grad_out, need_input_grad)?;
                Ok((gx, Some(g)))
            }
            Layer::Activation(a) => Ok((
                Some(activation_backward(*a, input, output, grad_out)?),
                None,
            )),
            Layer::Flatten | Layer::Reshape(_) => Ok((
                Some(grad_out.clone().reshape(input.shape().to_vec())?),
                None,
            )),
        }
    }
}

/// Activations recorded by [`Network::forward_trace`]: entry `i` is the
/// input of layer `i`, the last entry is the network output.
#[derive(Debug, Clone)]
pub struct Trace<T = f32> {
    pub activations: Vec<Tensor<T>>,
}

impl<T: Scalar> Trace<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.activations
            .last()
            .expect("trace holds at least the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T = f32> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Network<T> {
    /// Builds a stack; trainable layers are named `{prefix}{name}` using the
    /// supplied names in order.
    pub fn build<R: Rng + ?Sized>(
        specs: &[(Option<&str>, LayerSpec)],
        input: &[usize],
        init: Init,
        rng: &mut R,
    ) -> Result<(Self, Vec<usize>)> {
        let mut shape = input.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for (name, spec) in specs {
            layers.push(spec.build(name.unwrap_or(""), &shape, init, rng)?);
            shape = spec.output_shape(&shape)?;
        }
        Ok((Network { layers }, shape))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut iter = self.layers.iter();
        let Some(first) = iter.next() else {
            return Ok(x.clone());
        };
        let mut cur = first.forward(x)?;
        for layer in iter {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    pub fn forward_trace(&self, x: Tensor<T>) -> Result<Trace<T>> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x);
        for layer in &self.layers {
            let next = layer.forward(activations.last().expect("non-empty"))?;
            activations.push(next);
        }
        Ok(Trace { activations })
    }

    /// Backpropagates `grad_out` through the recorded trace. Returns the input
    /// gradient (if requested) and one entry per layer holding its parameter
    /// gradients.
    pub fn backward(
        &self,
        trace: &Trace<T>,
        grad_out: Tensor<T>,
        need_input_grad: bool,
    ) -> Result<NetworkGrads<T>> {
        if trace.activations.len() != self.layers.len() + 1 {
            return Err(Error::invalid("trace does not belong to this network"));
        }
        let mut grads = vec![None; self.layers.len()];
        let mut g = grad_out;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let want_input = need_input_grad || i > 0;
            let (gx, pg) = layer.backward(
                &trace.activations[i],
                &trace.activations[i + 1],
                &g,
                want_input,
            )?;
            grads[i] = pg;
            match gx {
                Some(gx) => g = gx,
                None => return Ok((None, grads)),
            }
        }
        Ok((Some(g), grads))
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .map(LayerParams::param_count)
            .sum()
    }

    pub fn named_params(&self) -> impl Iterator<Item = (&str, &LayerParams<T>)> {
        self.layers
            .iter()
            .filter_map(|l| Some((l.name()?, l.params()?)))
    }
}
