//! Sequential model specifications, parameter sets and the GAN builders.

mod builders;
mod summary;

pub use builders::{
    build_composite, build_discriminator, build_discriminator_with, build_generator, build_generator_with,
    build_tabular_gan, scaled_width,
    ImageShape, DEFAULT_IMAGE, DEFAULT_LATENT_DIM,
};
pub use summary::{format_thousands, summarize, Summarize};

use crate::autodiff::{Tape, Var};
use crate::error::{ensure, Error, Result};
use crate::nn::{Adam, LayerKind, LayerParams, LayerSpec};
use crate::rng::Prng;
use crate::tensor::Tensor;

/// An ordered stack of layers plus the per-sample input shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

/// Generator stacked on a frozen copy of the discriminator.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeSpec {
    pub name: String,
    pub generator: ModelSpec,
    pub discriminator: ModelSpec,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, input_shape: Vec<usize>) -> Self {
        ModelSpec { name: name.into(), input_shape, layers: Vec::new() }
    }

    /// Appends a layer named `<stem>` or `<stem>_<k>` in Keras style.
    pub fn push(&mut self, kind: LayerKind) -> &mut Self {
        let stem = kind.name_stem();
        let k = self.layers.iter().filter(|l| l.kind.name_stem() == stem).count();
        let name = if k == 0 { stem.to_string() } else { format!("{stem}_{k}") };
        self.layers.push(LayerSpec::new(name, kind));
        self
    }

    /// Per-sample output shape after every layer.
    pub fn output_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = layer.output_shape(&shape).map_err(|e| match e {
                Error::Shape(m) => Error::Shape(format!("layer {}: {m}", layer.name)),
                other => other,
            })?;
            out.push(shape.clone());
        }
        Ok(out)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.output_shapes()?.pop().unwrap_or_else(|| self.input_shape.clone()))
    }

    /// Input shape seen by each layer.
    pub fn input_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        shapes.extend(self.output_shapes()?);
        shapes.pop();
        Ok(shapes)
    }

    pub fn param_counts(&self) -> Result<Vec<usize>> {
        self.layers
            .iter()
            .zip(self.input_shapes()?)
            .map(|(l, s)| l.param_count(&s))
            .collect()
    }

    pub fn total_params(&self) -> Result<usize> {
        Ok(self.param_counts()?.iter().sum())
    }

    pub fn trainable_params(&self) -> Result<usize> {
        Ok(self
            .param_counts()?
            .iter()
            .zip(&self.layers)
            .filter(|(_, l)| l.trainable)
            .map(|(c, _)| c)
            .sum())
    }

    pub fn non_trainable_params(&self) -> Result<usize> {
        Ok(self.total_params()? - self.trainable_params()?)
    }

    /// Copy with every layer's trainable flag set to `trainable`.
    pub fn with_trainable(&self, trainable: bool) -> ModelSpec {
        let mut spec = self.clone();
        for l in &mut spec.layers {
            l.trainable = trainable;
        }
        spec
    }

    /// Equal layers and input shape, ignoring trainable flags.
    pub fn same_architecture(&self, other: &ModelSpec) -> bool {
        self.input_shape == other.input_shape
            && self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.name == b.name && a.kind == b.kind)
    }

    /// Index of the first flatten layer, the discriminator's feature tap.
    pub fn flatten_index(&self) -> Option<usize> {
        self.layers.iter().position(|l| l.kind == LayerKind::Flatten)
    }
}

impl CompositeSpec {
    pub fn total_params(&self) -> Result<usize> {
        Ok(self.generator.total_params()? + self.discriminator.total_params()?)
    }

    pub fn trainable_params(&self) -> Result<usize> {
        Ok(self.generator.trainable_params()? + self.discriminator.trainable_params()?)
    }

    pub fn non_trainable_params(&self) -> Result<usize> {
        Ok(self.total_params()? - self.trainable_params()?)
    }

    /// The discriminator with its layers unfrozen, for standalone training.
    pub fn standalone_discriminator(&self) -> ModelSpec {
        self.discriminator.with_trainable(true)
    }

    /// `D(G(z))` with D's parameters held fixed per the composite's flags.
    pub fn forward(
        &self,
        tape: &mut Tape,
        g: &Network,
        d: &Network,
        z: Var,
        training: bool,
        rng: &mut Prng,
    ) -> Result<(Forward, Forward)> {
        let gf = g.forward_as(&self.generator, tape, z, training, rng)?;
        let df = d.forward_as(&self.discriminator, tape, gf.output, training, rng)?;
        Ok((gf, df))
    }
}

/// A [`ModelSpec`] with concrete parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: ModelSpec,
    params: Vec<Option<LayerParams>>,
}

/// Tape handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub output: Var,
    pub layer_outputs: Vec<Var>,
    pub params: Vec<Option<(Var, Var)>>,
}

impl Network {
    /// Weights ~ N(0, 0.02^2), biases zero.
    pub fn init(spec: ModelSpec, rng: &mut Prng) -> Result<Self> {
        let params = spec
            .layers
            .iter()
            .zip(spec.input_shapes()?)
            .map(|(l, s)| LayerParams::init(&l.kind, &s, rng))
            .collect::<Result<_>>()?;
        Ok(Network { spec, params })
    }

    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        let params = spec
            .layers
            .iter()
            .zip(spec.input_shapes()?)
            .map(|(l, s)| LayerParams::zeros(&l.kind, &s))
            .collect::<Result<_>>()?;
        Ok(Network { spec, params })
    }

    /// Builds a network from explicit per-layer parameters, checking shapes.
    pub fn from_params(spec: ModelSpec, params: Vec<Option<LayerParams>>) -> Result<Self> {
        let expected = Network::zeros(spec.clone())?;
        ensure!(
            params.len() == expected.params.len(),
            Shape,
            "{} layer parameter slots for {} layers",
            params.len(),
            expected.params.len()
        );
        for (i, (p, e)) in params.iter().zip(&expected.params).enumerate() {
            let ok = match (p, e) {
                (None, None) => true,
                (Some(p), Some(e)) => {
                    p.weight.shape() == e.weight.shape() && p.bias.shape() == e.bias.shape()
                }
                _ => false,
            };
            ensure!(ok, Shape, "parameters of layer {} do not fit", spec.layers[i].name);
        }
        Ok(Network { spec, params })
    }

    pub fn layer_params(&self) -> &[Option<LayerParams>] {
        &self.params
    }

    /// `(layer name, params)` for every parameterized layer.
    pub fn named_params(&self) -> impl Iterator<Item = (&str, &LayerParams)> {
        self.spec
            .layers
            .iter()
            .zip(&self.params)
            .filter_map(|(l, p)| p.as_ref().map(|p| (l.name.as_str(), p)))
    }

    pub fn param_tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.params.iter().flatten().flat_map(|p| [&p.weight, &p.bias])
    }

    pub fn param_tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.params.iter_mut().flatten().flat_map(|p| [&mut p.weight, &mut p.bias])
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        input: Var,
        training: bool,
        rng: &mut Prng,
    ) -> Result<Forward> {
        self.forward_as(&self.spec, tape, input, training, rng)
    }

    /// Forward pass whose parameter leaves require gradients according to
    /// `flags` (an architecture-identical spec, e.g. a frozen copy).
    pub fn forward_as(
        &self,
        flags: &ModelSpec,
        tape: &mut Tape,
        input: Var,
        training: bool,
        rng: &mut Prng,
    ) -> Result<Forward> {
        self.forward_prefix(flags, tape, input, self.spec.layers.len(), training, rng)
    }

    /// As [`Network::forward_as`], stopping after the first `layers` layers.
    pub fn forward_prefix(
        &self,
        flags: &ModelSpec,
        tape: &mut Tape,
        input: Var,
        layers: usize,
        training: bool,
        rng: &mut Prng,
    ) -> Result<Forward> {
        ensure!(layers <= self.spec.layers.len(), Contract, "{} has fewer than {layers} layers", self.spec.name);
        ensure!(
            flags.same_architecture(&self.spec),
            Contract,
            "spec {:?} does not match network {:?}",
            flags.name,
            self.spec.name
        );
        let in_shape = tape.value(input).shape();
        ensure!(
            in_shape.len() == self.spec.input_shape.len() + 1
                && in_shape[1..] == self.spec.input_shape[..],
            Shape,
            "{} expects N x {:?}, got {:?}",
            self.spec.name,
            self.spec.input_shape,
            in_shape
        );
        let batch = in_shape[0];
        let mut x = input;
        let mut layer_outputs = Vec::with_capacity(self.spec.layers.len());
        let mut param_vars = Vec::with_capacity(self.spec.layers.len());
        for ((layer, flag), params) in self.spec.layers.iter().zip(&flags.layers).zip(&self.params).take(layers) {
            let pv = params.as_ref().map(|p| {
                (
                    tape.leaf(p.weight.clone(), flag.trainable),
                    tape.leaf(p.bias.clone(), flag.trainable),
                )
            });
            x = match (&layer.kind, pv) {
                (LayerKind::Conv2d { stride, activation, .. }, Some((w, b))) => {
                    let y = tape.conv2d(x, w, b, *stride)?;
                    match activation {
                        Some(a) => tape.activation(y, *a)?,
                        None => y,
                    }
                }
                (LayerKind::Conv2dTranspose { stride, activation, .. }, Some((w, b))) => {
                    let y = tape.conv2d_transpose(x, w, b, *stride)?;
                    match activation {
                        Some(a) => tape.activation(y, *a)?,
                        None => y,
                    }
                }
                (LayerKind::Dense { activation, .. }, Some((w, b))) => {
                    let y = tape.dense(x, w, b)?;
                    match activation {
                        Some(a) => tape.activation(y, *a)?,
                        None => y,
                    }
                }
                (LayerKind::Activation(a), None) => tape.activation(x, *a)?,
                (LayerKind::Dropout { rate }, None) => tape.dropout(x, *rate, rng, training)?,
                (LayerKind::Flatten, None) => tape.flatten(x)?,
                (LayerKind::Reshape { target }, None) => {
                    let mut shape = vec![batch];
                    shape.extend_from_slice(target);
                    tape.reshape(x, &shape)?
                }
                _ => unreachable!("parameters are congruent with layer kinds"),
            };
            layer_outputs.push(x);
            param_vars.push(pv);
        }
        Ok(Forward { output: x, layer_outputs, params: param_vars })
    }

    /// Batched inference (no dropout, no gradients).
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let frozen = self.spec.with_trainable(false);
        let fwd = self.forward_as(&frozen, &mut tape, x, false, &mut Prng::new(0))?;
        Ok(tape.take_value(fwd.output))
    }

    /// One optimizer step on every layer that `flags` marks trainable, using
    /// the gradients a backward pass left on `tape`.
    pub fn apply_gradients(
        &mut self,
        flags: &ModelSpec,
        tape: &Tape,
        fwd: &Forward,
        opt: &mut Adam,
    ) -> Result<()> {
        ensure!(flags.same_architecture(&self.spec), Contract, "spec does not match network");
        let mut grads: Vec<Vec<f64>> = Vec::new();
        for (flag, pv) in flags.layers.iter().zip(&fwd.params) {
            if let (true, Some((w, b))) = (flag.trainable, pv) {
                for v in [w, b] {
                    let n = tape.value(*v).len();
                    grads.push(tape.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]));
                }
            }
        }
        let mut targets: Vec<&mut Tensor> = flags
            .layers
            .iter()
            .zip(self.params.iter_mut())
            .filter(|(f, _)| f.trainable)
            .filter_map(|(_, p)| p.as_mut())
            .flat_map(|p| [&mut p.weight, &mut p.bias])
            .collect();
        let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        opt.step(&mut targets, &grad_refs)
    }

    pub fn is_finite(&self) -> bool {
        self.param_tensors().all(Tensor::is_finite)
    }
}
