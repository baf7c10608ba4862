use super::activation::Activation;
use crate::error::{ensure, Error, Result};
use crate::rng::Prng;
use crate::tensor::{numel, Tensor};

/// Standard deviation of the zero-mean normal weight initializer.
pub const INIT_STD: f64 = 0.02;
pub const DEFAULT_DROPOUT: f64 = 0.4;

/// Layer variants. Convolutions always use "same" zero padding, so the
/// output spatial size is `ceil(in / stride)` (or `in * stride` for the
/// transposed form).
#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Conv2d { filters: usize, kernel: usize, stride: usize, activation: Option<Activation> },
    Conv2dTranspose { filters: usize, kernel: usize, stride: usize, activation: Option<Activation> },
    Dense { units: usize, activation: Option<Activation> },
    Activation(Activation),
    Dropout { rate: f64 },
    Flatten,
    Reshape { target: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub trainable: bool,
}

/// Weight and bias of a parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LayerKind {
    pub fn class_name(&self) -> &'static str {
        match self {
            LayerKind::Conv2d { .. } => "Conv2D",
            LayerKind::Conv2dTranspose { .. } => "Conv2DTranspose",
            LayerKind::Dense { .. } => "Dense",
            LayerKind::Activation(a) => a.class_name(),
            LayerKind::Dropout { .. } => "Dropout",
            LayerKind::Flatten => "Flatten",
            LayerKind::Reshape { .. } => "Reshape",
        }
    }

    pub(crate) fn name_stem(&self) -> &'static str {
        match self {
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::Conv2dTranspose { .. } => "conv2d_transpose",
            LayerKind::Dense { .. } => "dense",
            LayerKind::Activation(a) => a.layer_stem(),
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::Flatten => "flatten",
            LayerKind::Reshape { .. } => "reshape",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(
            self,
            LayerKind::Conv2d { .. } | LayerKind::Conv2dTranspose { .. } | LayerKind::Dense { .. }
        )
    }

    fn validate(&self) -> Result<()> {
        match self {
            LayerKind::Conv2d { filters, kernel, stride, .. }
            | LayerKind::Conv2dTranspose { filters, kernel, stride, .. } => {
                ensure!(
                    *filters > 0 && *kernel > 0 && *stride > 0,
                    Contract,
                    "convolution needs positive filters/kernel/stride"
                );
            }
            LayerKind::Dense { units, .. } => ensure!(*units > 0, Contract, "dense needs units > 0"),
            LayerKind::Dropout { rate } => {
                ensure!((0.0..1.0).contains(rate), Contract, "dropout rate {rate} outside [0, 1)")
            }
            LayerKind::Reshape { target } => ensure!(
                !target.is_empty() && target.iter().all(|&d| d > 0),
                Contract,
                "reshape target {target:?} must have positive dims"
            ),
            LayerKind::Activation(_) | LayerKind::Flatten => {}
        }
        Ok(())
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.validate()?;
        match self {
            LayerKind::Conv2d { filters, stride, .. } => {
                let [h, w, _] = spatial(input, "Conv2D")?;
                Ok(vec![h.div_ceil(*stride), w.div_ceil(*stride), *filters])
            }
            LayerKind::Conv2dTranspose { filters, stride, .. } => {
                let [h, w, _] = spatial(input, "Conv2DTranspose")?;
                Ok(vec![h * stride, w * stride, *filters])
            }
            LayerKind::Dense { units, .. } => {
                ensure!(input.len() == 1, Shape, "Dense expects a flat input, got {input:?}");
                Ok(vec![*units])
            }
            LayerKind::Activation(_) | LayerKind::Dropout { .. } => Ok(input.to_vec()),
            LayerKind::Flatten => Ok(vec![numel(input)]),
            LayerKind::Reshape { target } => {
                ensure!(
                    numel(target) == numel(input),
                    Shape,
                    "cannot reshape {input:?} into {target:?}"
                );
                Ok(target.clone())
            }
        }
    }

    /// Shapes of (weight, bias) for an input shape, or `None` for
    /// parameter-free layers.
    pub fn param_shapes(&self, input: &[usize]) -> Result<Option<(Vec<usize>, Vec<usize>)>> {
        self.output_shape(input)?;
        Ok(match self {
            LayerKind::Conv2d { filters, kernel, .. }
            | LayerKind::Conv2dTranspose { filters, kernel, .. } => {
                Some((vec![*kernel, *kernel, input[2], *filters], vec![*filters]))
            }
            LayerKind::Dense { units, .. } => Some((vec![input[0], *units], vec![*units])),
            _ => None,
        })
    }

    /// Number of scalar parameters for the given input shape.
    pub fn param_count(&self, input: &[usize]) -> Result<usize> {
        Ok(self.param_shapes(input)?.map_or(0, |(w, b)| numel(&w) + numel(&b)))
    }
}

fn spatial(input: &[usize], what: &str) -> Result<[usize; 3]> {
    match *input {
        [h, w, c] => Ok([h, w, c]),
        _ => Err(Error::Shape(format!("{what} expects H x W x C input, got {input:?}"))),
    }
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        LayerSpec { name: name.into(), kind, trainable: true }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.kind.output_shape(input)
    }

    pub fn param_count(&self, input: &[usize]) -> Result<usize> {
        self.kind.param_count(input)
    }
}

/// Free-function form of [`LayerKind::param_count`].
pub fn param_count(spec: &LayerSpec, input: &[usize]) -> Result<usize> {
    spec.param_count(input)
}

impl LayerParams {
    /// Zero-mean normal weights with std [`INIT_STD`], zero biases.
    pub fn init(kind: &LayerKind, input: &[usize], rng: &mut Prng) -> Result<Option<Self>> {
        Ok(kind.param_shapes(input)?.map(|(ws, bs)| {
            let n = numel(&ws);
            let data = (0..n).map(|_| INIT_STD * rng.normal()).collect();
            LayerParams {
                weight: Tensor::new(ws, data).expect("shape matches"),
                bias: Tensor::zeros(&bs),
            }
        }))
    }

    pub fn zeros(kind: &LayerKind, input: &[usize]) -> Result<Option<Self>> {
        Ok(kind
            .param_shapes(input)?
            .map(|(ws, bs)| LayerParams { weight: Tensor::zeros(&ws), bias: Tensor::zeros(&bs) }))
    }
}
