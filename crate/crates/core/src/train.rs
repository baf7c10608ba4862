//! Adversarial training: pixel normalization, real/fake batch sampling, and
//! the alternating discriminator/generator updates.

use std::io::Write;

use crate::autodiff::Tape;
use crate::error::{ensure, Error, Result};
use crate::image::Image;
use crate::model::{build_composite, CompositeSpec, ModelSpec, Network};
use crate::nn::{Adam, AdamConfig};
use crate::rng::{sample_latent, LatentPrior, Prng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Real and fake samples per discriminator update (each side).
    pub n_sample: usize,
    pub steps: usize,
    pub prior: LatentPrior,
    pub seed: u64,
    /// Invoke the checkpoint hook every this many steps (0 = never).
    pub checkpoint_every: usize,
    pub d_updates: usize,
    pub g_updates: usize,
    /// Real targets become `1 - label_smoothing`.
    pub label_smoothing: f64,
    /// Probability of flipping each discriminator target.
    pub label_noise: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_sample: 64,
            steps: 2000,
            prior: LatentPrior::default(),
            seed: 0,
            checkpoint_every: 0,
            d_updates: 1,
            g_updates: 1,
            label_smoothing: 0.0,
            label_noise: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_sample >= 1, Contract, "n_sample must be at least 1");
        ensure!(self.d_updates >= 1 && self.g_updates >= 1, Contract, "update ratios must be >= 1");
        ensure!(
            (0.0..0.5).contains(&self.label_smoothing) && (0.0..0.5).contains(&self.label_noise),
            Contract,
            "label smoothing and noise must lie in [0, 0.5)"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub d_loss: f64,
    pub g_loss: f64,
    pub d_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub steps: Vec<StepStats>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `step,d_loss,g_loss,d_acc` rows, steps numbered from 1.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "step,d_loss,g_loss,d_acc")?;
        for (i, s) in self.steps.iter().enumerate() {
            writeln!(w, "{},{},{},{}", i + 1, s.d_loss, s.g_loss, s.d_accuracy)?;
        }
        Ok(())
    }

    pub fn mean_accuracy_last(&self, k: usize) -> f64 {
        let tail = &self.steps[self.steps.len().saturating_sub(k)..];
        tail.iter().map(|s| s.d_accuracy).sum::<f64>() / tail.len().max(1) as f64
    }
}

/// Generator, discriminator, their frozen composite and both optimizers.
#[derive(Debug, Clone)]
pub struct Gan {
    pub generator: Network,
    pub discriminator: Network,
    pub composite: CompositeSpec,
    pub g_opt: Adam,
    pub d_opt: Adam,
}

impl Gan {
    pub fn new(generator: Network, discriminator: Network, adam: AdamConfig) -> Result<Self> {
        adam.validate()?;
        let composite = build_composite(&generator.spec, &discriminator.spec)?;
        Ok(Gan { generator, discriminator, composite, g_opt: Adam::new(adam), d_opt: Adam::new(adam) })
    }

    /// Initializes both networks from `seed` (generator first).
    pub fn init(g: ModelSpec, d: ModelSpec, adam: AdamConfig, seed: u64) -> Result<Self> {
        let mut rng = Prng::new(seed);
        let generator = Network::init(g, &mut rng)?;
        let discriminator = Network::init(d, &mut rng)?;
        Gan::new(generator, discriminator, adam)
    }

    pub fn latent_dim(&self) -> usize {
        self.generator.spec.input_shape[0]
    }
}

/// `p / 127.5 - 1`, mapping bytes onto `[-1, 1]`.
pub fn normalize_pixels(img: &[u8]) -> Vec<f64> {
    img.iter().map(|&p| p as f64 / 127.5 - 1.0).collect()
}

/// Inverse of [`normalize_pixels`], rounding half away from zero.
pub fn denormalize_pixel(v: f64) -> u8 {
    (127.5 * (v + 1.0)).round().clamp(0.0, 255.0) as u8
}

pub fn denormalize_pixels(values: &[f64]) -> Vec<u8> {
    values.iter().map(|&v| denormalize_pixel(v)).collect()
}

/// Stacks equally sized images into an `N x H x W x C` tensor on `[-1, 1]`.
pub fn image_batch(images: &[Image]) -> Result<Tensor> {
    ensure!(!images.is_empty(), Contract, "no images");
    let shape = images[0].shape();
    ensure!(images.iter().all(|im| im.shape() == shape), Shape, "images differ in shape");
    let mut data = Vec::with_capacity(images.len() * images[0].pixels.len());
    for im in images {
        data.extend(normalize_pixels(&im.pixels));
    }
    let mut dims = vec![images.len()];
    dims.extend_from_slice(&shape);
    Tensor::new(dims, data)
}

/// Splits an `N x H x W x C` tensor on `[-1, 1]` into byte images.
pub fn batch_images(batch: &Tensor) -> Result<Vec<Image>> {
    ensure!(batch.shape().len() == 4, Shape, "expected N x H x W x C, got {:?}", batch.shape());
    let [n, h, w, c] = [batch.shape()[0], batch.shape()[1], batch.shape()[2], batch.shape()[3]];
    batch
        .data()
        .chunks_exact(h * w * c)
        .take(n)
        .map(|px| Image::new(h, w, c, denormalize_pixels(px)))
        .collect()
}

/// Draws `n` rows of `dataset`: without replacement if the dataset has at
/// least `n` rows, with replacement otherwise. Labels are all 1.
pub fn sample_real(dataset: &Tensor, n: usize, rng: &mut Prng) -> Result<(Tensor, Tensor)> {
    let rows = dataset.shape()[0];
    ensure!(rows > 0 && n > 0, Contract, "empty dataset or batch");
    let picks: Vec<usize> = if rows >= n {
        let mut idx: Vec<usize> = (0..rows).collect();
        for i in 0..n {
            let j = i + rng.index(rows - i);
            idx.swap(i, j);
        }
        idx.truncate(n);
        idx
    } else {
        (0..n).map(|_| rng.index(rows)).collect()
    };
    Ok((dataset.select_rows(&picks)?, Tensor::full(&[n], 1.0)))
}

/// `G(z)` for `n` fresh latents; labels are all 0.
pub fn sample_fake(
    g: &Network,
    n: usize,
    prior: LatentPrior,
    rng: &mut Prng,
) -> Result<(Tensor, Tensor)> {
    let z = sample_latent(n, g.spec.input_shape[0], prior, rng);
    Ok((g.predict(&z)?, Tensor::zeros(&[n])))
}

fn targets(base: &Tensor, cfg: &TrainConfig, rng: &mut Prng) -> Tensor {
    let mut t = base.clone();
    for v in t.data_mut() {
        if cfg.label_noise > 0.0 && rng.bernoulli(cfg.label_noise) {
            *v = 1.0 - *v;
        }
        if *v == 1.0 {
            *v -= cfg.label_smoothing;
        }
    }
    t
}

fn diverged(step: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NumericDomain(what) => Error::TrainingDivergence { step, what },
        other => other,
    }
}

/// One discriminator update on `real` plus an equal number of fresh fakes.
/// Returns `(loss, accuracy)`; `step` only labels divergence errors.
pub fn discriminator_update(
    gan: &mut Gan,
    real: &Tensor,
    cfg: &TrainConfig,
    rng: &mut Prng,
    step: usize,
) -> Result<(f64, f64)> {
    let n = real.shape()[0];
    let wrap = diverged(step);
    let (fake, fake_labels) = sample_fake(&gan.generator, n, cfg.prior, rng).map_err(&wrap)?;
    let batch = Tensor::concat_outer(&[real, &fake])?;
    let labels = Tensor::concat_outer(&[&Tensor::full(&[n], 1.0), &fake_labels])?;
    let t = targets(&labels, cfg, rng);

    let mut tape = Tape::new();
    let x = tape.constant(batch);
    let fwd = gan.discriminator.forward(&mut tape, x, true, rng).map_err(&wrap)?;
    let loss = tape.bce(fwd.output, &t).map_err(&wrap)?;
    let d_loss = tape.value(loss).data()[0];
    let pred = tape.value(fwd.output).data();
    let correct = pred.iter().zip(labels.data()).filter(|(&p, &l)| (p >= 0.5) == (l == 1.0)).count();
    let d_accuracy = correct as f64 / pred.len() as f64;
    tape.backward(loss).map_err(&wrap)?;
    let spec = gan.discriminator.spec.clone();
    gan.discriminator.apply_gradients(&spec, &tape, &fwd, &mut gan.d_opt)?;
    Ok((d_loss, d_accuracy))
}

/// One generator update through the frozen composite on `n` fresh latents,
/// all labelled real. Returns the loss.
pub fn generator_update(gan: &mut Gan, n: usize, cfg: &TrainConfig, rng: &mut Prng, step: usize) -> Result<f64> {
    let wrap = diverged(step);
    let z = sample_latent(n, gan.latent_dim(), cfg.prior, rng);
    let mut tape = Tape::new();
    let zv = tape.constant(z);
    let (gf, df) =
        gan.composite.forward(&mut tape, &gan.generator, &gan.discriminator, zv, true, rng).map_err(&wrap)?;
    let loss = tape.bce(df.output, &Tensor::full(&[n], 1.0)).map_err(&wrap)?;
    let g_loss = tape.value(loss).data()[0];
    tape.backward(loss).map_err(&wrap)?;
    gan.generator.apply_gradients(&gan.composite.generator, &tape, &gf, &mut gan.g_opt)?;
    Ok(g_loss)
}

/// `cfg.d_updates` discriminator updates followed by `cfg.g_updates`
/// generator updates. `step` only labels divergence errors.
pub fn train_step(
    gan: &mut Gan,
    real: &Tensor,
    cfg: &TrainConfig,
    rng: &mut Prng,
    step: usize,
) -> Result<StepStats> {
    let n = real.shape()[0];
    let (mut d_loss, mut d_accuracy, mut g_loss) = (0.0, 0.0, 0.0);
    for _ in 0..cfg.d_updates {
        (d_loss, d_accuracy) = discriminator_update(gan, real, cfg, rng, step)?;
    }
    for _ in 0..cfg.g_updates {
        g_loss = generator_update(gan, n, cfg, rng, step)?;
    }
    if !(gan.generator.is_finite() && gan.discriminator.is_finite()) {
        return Err(Error::TrainingDivergence { step, what: "non-finite parameter".into() });
    }
    Ok(StepStats { d_loss, g_loss, d_accuracy })
}

/// Runs `cfg.steps` training steps on `dataset` (rows already normalized).
/// `on_checkpoint(step, gan)` fires every `cfg.checkpoint_every` steps.
pub fn train(
    dataset: &Tensor,
    mut gan: Gan,
    cfg: &TrainConfig,
    mut on_checkpoint: impl FnMut(usize, &Gan) -> Result<()>,
) -> Result<(Gan, TrainHistory)> {
    cfg.validate()?;
    ensure!(
        dataset.shape()[1..] == gan.discriminator.spec.input_shape[..],
        Shape,
        "dataset rows {:?} do not match discriminator input {:?}",
        &dataset.shape()[1..],
        gan.discriminator.spec.input_shape
    );
    let mut rng = Prng::new(cfg.seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut history = TrainHistory::default();
    for step in 1..=cfg.steps {
        let mut step_rng = rng.fork();
        let (real, _) = sample_real(dataset, cfg.n_sample, &mut step_rng)?;
        history.steps.push(train_step(&mut gan, &real, cfg, &mut step_rng, step)?);
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
            on_checkpoint(step, &gan)?;
        }
    }
    Ok((gan, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_tabular_gan;

    #[test]
    fn pixel_endpoints_and_round_trip() {
        assert_eq!(normalize_pixels(&[0, 255]), vec![-1.0, 1.0]);
        assert_eq!(denormalize_pixel(0.0), 128);
        for p in 0..=255u8 {
            assert_eq!(denormalize_pixel(normalize_pixels(&[p])[0]), p);
        }
        assert_eq!(denormalize_pixel(-7.0), 0);
        assert_eq!(denormalize_pixel(3.0), 255);
    }

    #[test]
    fn sample_real_permutation_when_full() {
        let data = Tensor::new(vec![5, 1], (0..5).map(f64::from).collect()).unwrap();
        let (b, labels) = sample_real(&data, 5, &mut Prng::new(3)).unwrap();
        let mut got: Vec<f64> = b.data().to_vec();
        got.sort_by(f64::total_cmp);
        assert_eq!(got, [0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(labels.sum(), 5.0);
        let (b2, _) = sample_real(&data, 5, &mut Prng::new(3)).unwrap();
        assert_eq!(b, b2);
        let (big, _) = sample_real(&data, 12, &mut Prng::new(3)).unwrap();
        assert_eq!(big.shape(), &[12, 1]);
    }

    // 10^4 draws of one element from 10: each count ~ Bin(10^4, 0.1) with
    // std 30, so the 3-sigma window is [910, 1090].
    #[test]
    fn sample_real_is_uniform() {
        let data = Tensor::new(vec![10, 1], (0..10).map(f64::from).collect()).unwrap();
        let mut rng = Prng::new(17);
        let mut counts = [0usize; 10];
        for _ in 0..10_000 {
            let (b, _) = sample_real(&data, 1, &mut rng).unwrap();
            counts[b.data()[0] as usize] += 1;
        }
        for c in counts {
            assert!((910..=1090).contains(&c), "{counts:?}");
        }
    }

    fn tabular_with(seed: u64, adam: AdamConfig) -> Gan {
        let c = build_tabular_gan(4, 3, &[8]).unwrap();
        Gan::init(c.generator.clone(), c.standalone_discriminator(), adam, seed).unwrap()
    }

    fn tabular(seed: u64) -> Gan {
        tabular_with(seed, AdamConfig::default())
    }

    fn toy_data() -> Tensor {
        let mut rng = Prng::new(5);
        let data = (0..40 * 4).map(|_| 0.5 + 0.1 * rng.normal()).collect();
        Tensor::new(vec![40, 4], data).unwrap()
    }

    #[test]
    fn zero_learning_rate_freezes_everything() {
        let cfg = TrainConfig { n_sample: 8, steps: 3, ..TrainConfig::default() };
        let gan = tabular_with(1, AdamConfig { learning_rate: 0.0, ..AdamConfig::default() });
        let (after, hist) = train(&toy_data(), gan.clone(), &cfg, |_, _| Ok(())).unwrap();
        assert_eq!(after.generator, gan.generator);
        assert_eq!(after.discriminator, gan.discriminator);
        assert_eq!(hist.len(), 3);
        assert!(hist.steps.iter().all(|s| s.d_loss.is_finite() && s.g_loss > 0.0));
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let cfg = TrainConfig { steps: 0, ..TrainConfig::default() };
        let gan = tabular(2);
        let (after, hist) = train(&toy_data(), gan.clone(), &cfg, |_, _| Ok(())).unwrap();
        assert_eq!(after.generator, gan.generator);
        assert!(hist.is_empty());
    }

    #[test]
    fn checkpoint_cadence() {
        let cfg = TrainConfig { steps: 7, n_sample: 4, checkpoint_every: 3, ..TrainConfig::default() };
        let mut seen = Vec::new();
        train(&toy_data(), tabular(3), &cfg, |s, _| {
            seen.push(s);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, [3, 6]);
    }

    #[test]
    fn history_csv() {
        let h = TrainHistory { steps: vec![StepStats { d_loss: 0.5, g_loss: 1.0, d_accuracy: 0.75 }] };
        let mut out = Vec::new();
        h.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "step,d_loss,g_loss,d_acc\n1,0.5,1,0.75\n");
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = TrainConfig { n_sample: 0, ..TrainConfig::default() };
        assert!(train(&toy_data(), tabular(0), &cfg, |_, _| Ok(())).is_err());
    }
}
