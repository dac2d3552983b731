//! The layer set for desk-scale classifiers: fully-connected, 2-D
//! convolution, ReLU, max-pooling, flatten, with exact hand-written
//! reverse-mode gradients per layer.
//!
//! Forward passes record per-layer caches on a [`GradientTape`]; `backward`
//! consumes the tape in reverse. There is no general autodiff graph — the
//! layer set is fixed and each backward is analytic.

pub mod conv;
pub mod linear;
pub mod pool;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::Rng;
use crate::tensor::Tensor;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Architecture of one layer. Dimensions are per-sample (no batch axis).
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Linear {
        in_features: usize,
        out_features: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool2d {
        kernel: usize,
        stride: usize,
    },
    Flatten,
}

impl LayerSpec {
    pub fn is_parametric(&self) -> bool {
        matches!(self, LayerSpec::Linear { .. } | LayerSpec::Conv2d { .. })
    }

    /// Weight tensor shape, for parametric layers.
    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match *self {
            LayerSpec::Linear {
                in_features,
                out_features,
            } => Some(vec![out_features, in_features]),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => Some(vec![out_channels, in_channels, kernel_h, kernel_w]),
            _ => None,
        }
    }

    pub fn bias_shape(&self) -> Option<Vec<usize>> {
        match *self {
            LayerSpec::Linear { out_features, .. } => Some(vec![out_features]),
            LayerSpec::Conv2d { out_channels, .. } => Some(vec![out_channels]),
            _ => None,
        }
    }

    pub fn fan_in(&self) -> Option<usize> {
        match *self {
            LayerSpec::Linear { in_features, .. } => Some(in_features),
            LayerSpec::Conv2d {
                in_channels,
                kernel_h,
                kernel_w,
                ..
            } => Some(in_channels * kernel_h * kernel_w),
            _ => None,
        }
    }

    pub fn fan_out(&self) -> Option<usize> {
        match *self {
            LayerSpec::Linear { out_features, .. } => Some(out_features),
            LayerSpec::Conv2d {
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => Some(out_channels * kernel_h * kernel_w),
            _ => None,
        }
    }

    /// Output sample shape given the input sample shape; validates the
    /// kind-specific dimension constraints.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Linear { in_features, .. } => {
                if input != [in_features] {
                    return Err(Error::dimension(format_args!(
                        "linear expects flat input [{in_features}], got {input:?}"
                    )));
                }
                Ok(vec![self.fan_out().unwrap()])
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                padding,
            } => {
                let &[c, h, w] = input else {
                    return Err(Error::dimension(format_args!(
                        "conv2d expects [C,H,W] input, got {input:?}"
                    )));
                };
                if c != in_channels {
                    return Err(Error::dimension(format_args!(
                        "conv2d expects {in_channels} input channels, got {c}"
                    )));
                }
                if stride == 0 || kernel_h == 0 || kernel_w == 0 {
                    return Err(Error::dimension("conv2d kernel and stride must be positive"));
                }
                let ho = conv_out_dim(h, kernel_h, stride, padding)?;
                let wo = conv_out_dim(w, kernel_w, stride, padding)?;
                Ok(vec![out_channels, ho, wo])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::MaxPool2d { kernel, stride } => {
                let &[c, h, w] = input else {
                    return Err(Error::dimension(format_args!(
                        "maxpool2d expects [C,H,W] input, got {input:?}"
                    )));
                };
                if stride == 0 || kernel == 0 {
                    return Err(Error::dimension("maxpool2d kernel and stride must be positive"));
                }
                let ho = conv_out_dim(h, kernel, stride, 0)?;
                let wo = conv_out_dim(w, kernel, stride, 0)?;
                Ok(vec![c, ho, wo])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Linear { .. } => "linear",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Flatten => "flatten",
        }
    }
}

pub(crate) fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if padded < kernel {
        return Err(Error::dimension(format_args!(
            "window {kernel} larger than padded input {padded}"
        )));
    }
    let out = (padded - kernel) / stride + 1;
    if out == 0 {
        return Err(Error::dimension("non-positive output size"));
    }
    Ok(out)
}

/// Weight and bias for one parametric layer. Also reused as the gradient
/// container, which keeps shapes aligned by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Per-layer parameter slots aligned with `Network::specs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub layers: Vec<Option<LayerParams>>,
}

pub type ParamGrads = Params;

/// Cached forward state for one layer.
#[derive(Debug, Clone)]
pub enum TapeEntry {
    Linear { input: Tensor },
    Conv2d { input: Tensor },
    Relu { input: Tensor },
    MaxPool2d { input_shape: Vec<usize>, argmax: Vec<u32> },
    Flatten { input_shape: Vec<usize> },
}

/// Per-layer caches recorded by a forward pass, consumed by backward.
#[derive(Debug, Clone, Default)]
pub struct GradientTape {
    entries: Vec<TapeEntry>,
}

impl GradientTape {
    pub fn new() -> Self {
        GradientTape {
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A feed-forward stack of layers with a fixed per-sample input shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
    /// Per-layer output sample shapes, computed once at construction.
    shapes: Vec<Vec<usize>>,
}

impl Network {
    pub fn new(input_shape: Vec<usize>, specs: Vec<LayerSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        let mut shapes = Vec::with_capacity(specs.len());
        let mut current = input_shape.clone();
        for spec in &specs {
            current = spec.output_shape(&current)?;
            shapes.push(current.clone());
        }
        Ok(Network {
            input_shape,
            specs,
            shapes,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().unwrap()
    }

    /// Indices of parametric (weight-carrying) layers.
    pub fn parametric_layers(&self) -> Vec<usize> {
        self.specs
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_parametric())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn layer_label(&self, index: usize) -> String {
        format!("{}_{}", self.specs[index].kind_name(), index)
    }

    /// Kaiming-uniform weights (fan-in, ReLU gain), zero biases.
    pub fn init_params(&self, rng: &mut Rng) -> Params {
        let layers = self
            .specs
            .iter()
            .map(|spec| {
                spec.weight_shape().map(|wshape| {
                    let fan_in = spec.fan_in().unwrap().max(1);
                    let bound = math::sqrt(6.0 / fan_in as f64);
                    let n: usize = wshape.iter().product();
                    let data = (0..n).map(|_| rng.uniform_range(-bound, bound)).collect();
                    LayerParams {
                        weight: Tensor::new(wshape, data).unwrap(),
                        bias: Tensor::zeros(spec.bias_shape().unwrap()),
                    }
                })
            })
            .collect();
        Params { layers }
    }

    /// Zero-filled gradient (or velocity) slots matching `init_params`.
    pub fn zero_params(&self) -> Params {
        let layers = self
            .specs
            .iter()
            .map(|spec| {
                spec.weight_shape().map(|wshape| LayerParams {
                    weight: Tensor::zeros(wshape),
                    bias: Tensor::zeros(spec.bias_shape().unwrap()),
                })
            })
            .collect();
        Params { layers }
    }

    /// Full forward pass over a batch `[N, ..input_shape]`. When `tape` is
    /// provided, per-layer caches are recorded for a later `backward`.
    pub fn forward(
        &self,
        params: &Params,
        x: &Tensor,
        mut tape: Option<&mut GradientTape>,
    ) -> Result<Tensor> {
        if params.layers.len() != self.specs.len() {
            return Err(Error::dimension("parameter slot count mismatch"));
        }
        if x.ndim() < 1 || x.shape()[1..] != *self.input_shape {
            return Err(Error::dimension(format_args!(
                "input shape {:?}, expected [N, {:?}]",
                x.shape(),
                self.input_shape
            )));
        }
        if let Some(t) = tape.as_deref_mut() {
            if !t.is_empty() {
                return Err(Error::state("tape already holds an unconsumed forward"));
            }
        }
        let mut act = x.clone();
        for (i, spec) in self.specs.iter().enumerate() {
            let (out, entry) = layer_forward(spec, params.layers[i].as_ref(), &act)?;
            if let Some(t) = tape.as_deref_mut() {
                t.entries.push(entry);
            }
            act = out;
        }
        Ok(act)
    }

    /// Reverse pass: consumes the tape, returns the input gradient and
    /// per-layer parameter gradients.
    pub fn backward(
        &self,
        params: &Params,
        tape: &mut GradientTape,
        grad_out: &Tensor,
    ) -> Result<(Tensor, ParamGrads)> {
        if tape.entries.len() != self.specs.len() {
            return Err(Error::state(format_args!(
                "tape holds {} entries for {} layers; forward must precede backward",
                tape.entries.len(),
                self.specs.len()
            )));
        }
        let mut grads = self.zero_params();
        let mut grad = grad_out.clone();
        for i in (0..self.specs.len()).rev() {
            let entry = tape.entries.pop().unwrap();
            let (gin, gparams) =
                layer_backward(&self.specs[i], params.layers[i].as_ref(), entry, &grad)?;
            if let Some(gp) = gparams {
                grads.layers[i] = Some(gp);
            }
            grad = gin;
        }
        Ok((grad, grads))
    }
}

/// One layer's forward. Returns the activation and the tape entry that makes
/// the matching backward exact.
pub fn layer_forward(
    spec: &LayerSpec,
    params: Option<&LayerParams>,
    x: &Tensor,
) -> Result<(Tensor, TapeEntry)> {
    match spec {
        LayerSpec::Linear { .. } => {
            let p = params.ok_or_else(|| Error::state("linear layer without parameters"))?;
            let out = linear::forward(p, x)?;
            Ok((out, TapeEntry::Linear { input: x.clone() }))
        }
        LayerSpec::Conv2d {
            stride, padding, ..
        } => {
            let p = params.ok_or_else(|| Error::state("conv layer without parameters"))?;
            let out = conv::forward(p, x, *stride, *padding)?;
            Ok((out, TapeEntry::Conv2d { input: x.clone() }))
        }
        LayerSpec::Relu => {
            let out = x.map(|v| if v > 0.0 { v } else { 0.0 });
            Ok((out, TapeEntry::Relu { input: x.clone() }))
        }
        LayerSpec::MaxPool2d { kernel, stride } => {
            let (out, argmax) = pool::forward(x, *kernel, *stride)?;
            Ok((
                out,
                TapeEntry::MaxPool2d {
                    input_shape: x.shape().to_vec(),
                    argmax,
                },
            ))
        }
        LayerSpec::Flatten => {
            let shape = x.shape().to_vec();
            let n = shape[0];
            let rest: usize = shape[1..].iter().product();
            let out = x.clone().reshape(vec![n, rest])?;
            Ok((out, TapeEntry::Flatten { input_shape: shape }))
        }
    }
}

/// One layer's backward from its tape entry. `grad_params` is present only
/// for parametric layers.
pub fn layer_backward(
    spec: &LayerSpec,
    params: Option<&LayerParams>,
    entry: TapeEntry,
    grad_out: &Tensor,
) -> Result<(Tensor, Option<LayerParams>)> {
    match (spec, entry) {
        (LayerSpec::Linear { .. }, TapeEntry::Linear { input }) => {
            let p = params.ok_or_else(|| Error::state("linear layer without parameters"))?;
            let (gin, gp) = linear::backward(p, &input, grad_out)?;
            Ok((gin, Some(gp)))
        }
        (
            LayerSpec::Conv2d {
                stride, padding, ..
            },
            TapeEntry::Conv2d { input },
        ) => {
            let p = params.ok_or_else(|| Error::state("conv layer without parameters"))?;
            let (gin, gp) = conv::backward(p, &input, grad_out, *stride, *padding)?;
            Ok((gin, Some(gp)))
        }
        (LayerSpec::Relu, TapeEntry::Relu { input }) => {
            if !input.same_shape(grad_out) {
                return Err(Error::dimension("relu grad shape mismatch"));
            }
            let data = input
                .data()
                .iter()
                .zip(grad_out.data())
                .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                .collect();
            Ok((Tensor::new(input.shape().to_vec(), data)?, None))
        }
        (LayerSpec::MaxPool2d { .. }, TapeEntry::MaxPool2d { input_shape, argmax }) => {
            let gin = pool::backward(&input_shape, &argmax, grad_out)?;
            Ok((gin, None))
        }
        (LayerSpec::Flatten, TapeEntry::Flatten { input_shape }) => {
            Ok((grad_out.clone().reshape(input_shape)?, None))
        }
        _ => Err(Error::state("tape entry does not match layer kind")),
    }
}
