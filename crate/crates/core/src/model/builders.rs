use super::{CompositeSpec, ModelSpec};
use crate::error::{ensure, Result};
use crate::nn::{Activation, LayerKind, DEFAULT_DROPOUT, DEFAULT_LEAKY_SLOPE};

pub const DEFAULT_LATENT_DIM: usize = 100;
pub const DEFAULT_IMAGE: ImageShape = ImageShape { height: 32, width: 32, channels: 3 };

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn dims(&self) -> Vec<usize> {
        vec![self.height, self.width, self.channels]
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `round(base * scale)`, at least 1.
pub fn scaled_width(base: usize, scale: f64) -> usize {
    ((base as f64 * scale).round() as usize).max(1)
}

fn check_image(image: ImageShape, width_scale: f64) -> Result<()> {
    ensure!(
        image.height > 0 && image.width > 0 && image.channels > 0,
        Contract,
        "image dims must be positive"
    );
    ensure!(
        image.height % 8 == 0 && image.width % 8 == 0,
        Contract,
        "image {}x{} is not divisible by 8",
        image.height,
        image.width
    );
    ensure!(
        width_scale > 0.0 && width_scale.is_finite(),
        Contract,
        "width scale must be positive, got {width_scale}"
    );
    Ok(())
}

fn check_constants(leaky_slope: f64, dropout: f64) -> Result<()> {
    ensure!(
        leaky_slope > 0.0 && leaky_slope < 1.0,
        Contract,
        "leaky slope {leaky_slope} outside (0, 1)"
    );
    ensure!((0.0..1.0).contains(&dropout), Contract, "dropout rate {dropout} outside [0, 1)");
    Ok(())
}

fn conv(filters: usize, kernel: usize, stride: usize, activation: Option<Activation>) -> LayerKind {
    LayerKind::Conv2d { filters, kernel, stride, activation }
}

/// Strided-convolution discriminator ending in a sigmoid unit.
///
/// At the default 32x32x3 input and unit scale this is the classic
/// 522,497-parameter CIFAR-style DCGAN discriminator.
pub fn build_discriminator(image: ImageShape, width_scale: f64) -> Result<ModelSpec> {
    build_discriminator_with(image, width_scale, DEFAULT_LEAKY_SLOPE, DEFAULT_DROPOUT)
}

pub fn build_discriminator_with(
    image: ImageShape,
    width_scale: f64,
    leaky_slope: f64,
    dropout: f64,
) -> Result<ModelSpec> {
    check_image(image, width_scale)?;
    check_constants(leaky_slope, dropout)?;
    let leaky = LayerKind::Activation(Activation::leaky(leaky_slope));
    let w = |base| scaled_width(base, width_scale);
    let mut spec = ModelSpec::new("sequential", image.dims());
    spec.push(conv(w(64), 3, 1, None))
        .push(leaky.clone())
        .push(conv(w(128), 3, 2, None))
        .push(leaky.clone())
        .push(conv(w(128), 3, 2, None))
        .push(leaky.clone())
        .push(conv(w(256), 3, 2, None))
        .push(leaky)
        .push(LayerKind::Flatten)
        .push(LayerKind::Dropout { rate: dropout })
        .push(LayerKind::Dense { units: 1, activation: Some(Activation::Sigmoid) });
    Ok(spec)
}

/// Dense projection to an `(h/8, w/8)` feature map, three stride-2
/// transposed convolutions, and a tanh convolution to the image channels.
pub fn build_generator(latent_dim: usize, image: ImageShape, width_scale: f64) -> Result<ModelSpec> {
    build_generator_with(latent_dim, image, width_scale, DEFAULT_LEAKY_SLOPE)
}

pub fn build_generator_with(
    latent_dim: usize,
    image: ImageShape,
    width_scale: f64,
    leaky_slope: f64,
) -> Result<ModelSpec> {
    check_image(image, width_scale)?;
    check_constants(leaky_slope, 0.0)?;
    ensure!(latent_dim >= 1, Contract, "latent dim must be positive");
    let leaky = LayerKind::Activation(Activation::leaky(leaky_slope));
    let w = |base| scaled_width(base, width_scale);
    let (h0, w0, c0) = (image.height / 8, image.width / 8, w(256));
    let up = |filters| LayerKind::Conv2dTranspose { filters, kernel: 4, stride: 2, activation: None };
    let mut spec = ModelSpec::new("sequential_1", vec![latent_dim]);
    spec.push(LayerKind::Dense { units: h0 * w0 * c0, activation: None })
        .push(leaky.clone())
        .push(LayerKind::Reshape { target: vec![h0, w0, c0] })
        .push(up(w(128)))
        .push(leaky.clone())
        .push(up(w(128)))
        .push(leaky.clone())
        .push(up(w(128)))
        .push(leaky)
        .push(conv(image.channels, 3, 1, Some(Activation::Tanh)));
    Ok(spec)
}

/// Stacks `g` on a frozen copy of `d`. `d` itself is left untouched.
pub fn build_composite(g: &ModelSpec, d: &ModelSpec) -> Result<CompositeSpec> {
    let g_out = g.output_shape()?;
    d.output_shapes()?;
    ensure!(
        g_out == d.input_shape,
        Shape,
        "generator output {g_out:?} does not match discriminator input {:?}",
        d.input_shape
    );
    Ok(CompositeSpec {
        name: "sequential_2".into(),
        generator: g.clone(),
        discriminator: d.with_trainable(false),
    })
}

/// Dense GAN for tabular rows: latent -> hidden... -> features (tanh), and
/// features -> hidden... -> 1 (sigmoid) with leaky hidden activations.
pub fn build_tabular_gan(
    feature_dim: usize,
    latent_dim: usize,
    hidden_widths: &[usize],
) -> Result<CompositeSpec> {
    ensure!(feature_dim >= 1 && latent_dim >= 1, Contract, "dimensions must be positive");
    ensure!(hidden_widths.iter().all(|&h| h > 0), Contract, "hidden widths must be positive");
    let leaky = LayerKind::Activation(Activation::leaky(DEFAULT_LEAKY_SLOPE));

    let mut g = ModelSpec::new("tabular_generator", vec![latent_dim]);
    for &h in hidden_widths {
        g.push(LayerKind::Dense { units: h, activation: None }).push(leaky.clone());
    }
    g.push(LayerKind::Dense { units: feature_dim, activation: Some(Activation::Tanh) });

    let mut d = ModelSpec::new("tabular_discriminator", vec![feature_dim]);
    for &h in hidden_widths {
        d.push(LayerKind::Dense { units: h, activation: None }).push(leaky.clone());
    }
    d.push(LayerKind::Dense { units: 1, activation: Some(Activation::Sigmoid) });

    let mut c = build_composite(&g, &d)?;
    c.name = "tabular_gan".into();
    Ok(c)
}
