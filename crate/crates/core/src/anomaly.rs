//! Anomaly scoring by latent inversion, residual heatmaps and latent
//! arithmetic.
//!
//! Inversion searches for the latent point whose generated image best
//! explains an input, with the generator and discriminator held fixed. The
//! loss is `(1 - lambda) * mean|x - G(z)| + lambda * mean|f(x) - f(G(z))|`
//! where `f` is the discriminator's flattened feature map.

use crate::autodiff::{Tape, Var};
use crate::error::{ensure, Error, Result};
use crate::model::{ModelSpec, Network};
use crate::nn::{Adam, AdamConfig};
use crate::rng::{sample_latent, LatentPrior, LatentVector, Prng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum LatentInit {
    Random,
    /// Starting points, `N x latent_dim`, used by the first restart.
    Provided(Tensor),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Feature-matching weight `lambda` in `[0, 1]`.
    pub feature_weight: f64,
    pub restarts: usize,
    pub init: LatentInit,
    pub prior: LatentPrior,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            steps: 200,
            learning_rate: 0.05,
            feature_weight: 0.1,
            restarts: 1,
            init: LatentInit::Random,
            prior: LatentPrior::default(),
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.steps >= 1, Contract, "inversion needs at least one step");
        ensure!(self.restarts >= 1, Contract, "inversion needs at least one restart");
        ensure!(
            (0.0..=1.0).contains(&self.feature_weight),
            Contract,
            "feature weight {} outside [0, 1]",
            self.feature_weight
        );
        ensure!(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            Contract,
            "latent learning rate must be positive"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyReport {
    pub z_star: LatentVector,
    /// Loss at `z_star`; equal to the last entry of `trace`.
    pub score: f64,
    /// `|x - G(z_star)|`, same shape as the input image.
    pub residual: Tensor,
    /// Loss before the first update and after every update.
    pub trace: Vec<f64>,
}

struct Features<'a> {
    d: &'a Network,
    frozen: ModelSpec,
    layers: usize,
    target: Tensor,
    weight: f64,
}

struct Descent {
    z: Tensor,
    generated: Tensor,
    traces: Vec<Vec<f64>>,
}

fn lift(e: Error, step: usize) -> Error {
    match e {
        Error::NumericDomain(_) => Error::InversionDivergence { step },
        other => other,
    }
}

fn per_sample_loss(
    tape: &mut Tape,
    g: &Network,
    g_frozen: &ModelSpec,
    x: Var,
    z: Var,
    feats: Option<&Features>,
    lambda: f64,
) -> Result<(Var, Var)> {
    let mut rng = Prng::new(0);
    let gz = g.forward_as(g_frozen, tape, z, false, &mut rng)?.output;
    let pixel = tape.row_mean_abs_diff(x, gz)?;
    let mut loss = tape.scale(pixel, 1.0 - lambda)?;
    if let Some(f) = feats {
        let fz = f.d.forward_prefix(&f.frozen, tape, gz, f.layers, false, &mut rng)?.output;
        let fx = tape.constant(f.target.clone());
        let feature = tape.row_mean_abs_diff(fx, fz)?;
        let weighted = tape.scale(feature, f.weight)?;
        loss = tape.add(loss, weighted)?;
    }
    Ok((loss, gz))
}

fn descend(g: &Network, x: &Tensor, z0: Tensor, feats: Option<&Features>, cfg: &InversionConfig) -> Result<Descent> {
    let g_frozen = g.spec.with_trainable(false);
    let lambda = feats.map_or(0.0, |f| f.weight);
    let mut opt = Adam::new(AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() });
    let n = x.shape()[0];
    let mut z = z0;
    let mut traces = vec![Vec::with_capacity(cfg.steps + 1); n];
    for step in 0..=cfg.steps {
        let mut tape = Tape::new();
        let zv = tape.leaf(z.clone(), step < cfg.steps);
        let xv = tape.constant(x.clone());
        let (loss, gz) = per_sample_loss(&mut tape, g, &g_frozen, xv, zv, feats, lambda).map_err(|e| lift(e, step))?;
        let losses = tape.value(loss).data().to_vec();
        if !losses.iter().all(|l| l.is_finite()) {
            return Err(Error::InversionDivergence { step });
        }
        for (t, l) in traces.iter_mut().zip(&losses) {
            t.push(*l);
        }
        if step == cfg.steps {
            return Ok(Descent { z, generated: tape.take_value(gz), traces });
        }
        let total = tape.sum(loss).map_err(|e| lift(e, step))?;
        tape.backward(total)?;
        let grad = tape.grad(zv).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; z.len()]);
        opt.step(&mut [&mut z], &[&grad])?;
        if !z.is_finite() {
            return Err(Error::InversionDivergence { step });
        }
    }
    unreachable!("the final iteration returns")
}

/// Inverts every image of an `N x H x W x C` batch. Samples are independent:
/// each one's latent only receives gradient from its own loss.
pub fn invert_batch(
    g: &Network,
    x: &Tensor,
    d: Option<&Network>,
    cfg: &InversionConfig,
    rng: &mut Prng,
) -> Result<Vec<AnomalyReport>> {
    cfg.validate()?;
    let out_shape = g.spec.output_shape()?;
    ensure!(
        x.shape().len() == out_shape.len() + 1 && x.shape()[1..] == out_shape[..],
        Shape,
        "inputs {:?} do not match generator output N x {out_shape:?}",
        x.shape()
    );
    let n = x.shape()[0];
    let dim = g.spec.input_shape[0];
    let feats = match d {
        Some(d) if cfg.feature_weight > 0.0 => {
            let layers = d.spec.flatten_index().map_or(d.spec.layers.len(), |i| i + 1);
            let frozen = d.spec.with_trainable(false);
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let fx = d.forward_prefix(&frozen, &mut tape, xv, layers, false, &mut Prng::new(0))?.output;
            Some(Features { d, frozen, layers, target: tape.take_value(fx), weight: cfg.feature_weight })
        }
        _ => None,
    };

    let mut best: Option<Vec<AnomalyReport>> = None;
    for restart in 0..cfg.restarts {
        let mut restart_rng = rng.fork();
        let z0 = match (&cfg.init, restart) {
            (LatentInit::Provided(z), 0) => {
                ensure!(z.shape() == [n, dim], Shape, "initial latents {:?} != [{n}, {dim}]", z.shape());
                z.clone()
            }
            _ => sample_latent(n, dim, cfg.prior, &mut restart_rng),
        };
        let run = descend(g, x, z0, feats.as_ref(), cfg)?;
        let per = x.len() / n;
        let reports = (0..n).map(|i| {
            let xi = &x.data()[i * per..(i + 1) * per];
            let gi = &run.generated.data()[i * per..(i + 1) * per];
            let residual = xi.iter().zip(gi).map(|(a, b)| (a - b).abs()).collect();
            AnomalyReport {
                z_star: LatentVector(run.z.data()[i * dim..(i + 1) * dim].to_vec()),
                score: *run.traces[i].last().expect("trace is non-empty"),
                residual: Tensor::new(out_shape.clone(), residual).expect("image shape"),
                trace: run.traces[i].clone(),
            }
        });
        best = Some(match best {
            None => reports.collect(),
            Some(prev) => prev.into_iter().zip(reports).map(|(p, r)| if r.score < p.score { r } else { p }).collect(),
        });
    }
    Ok(best.expect("at least one restart"))
}

/// Inverts a single image of the generator's output shape.
pub fn invert_latent(
    g: &Network,
    x: &Tensor,
    d: Option<&Network>,
    cfg: &InversionConfig,
    rng: &mut Prng,
) -> Result<AnomalyReport> {
    let mut shape = vec![1];
    shape.extend_from_slice(x.shape());
    let batch = x.clone().reshape(&shape)?;
    Ok(invert_batch(g, &batch, d, cfg, rng)?.remove(0))
}

/// Final inversion loss; higher means more anomalous.
pub fn anomaly_score(
    x: &Tensor,
    g: &Network,
    d: Option<&Network>,
    cfg: &InversionConfig,
    rng: &mut Prng,
) -> Result<f64> {
    Ok(invert_latent(g, x, d, cfg, rng)?.score)
}

/// Channel-summed `|x - y|` as an `H x W` map scaled so its maximum is 1
/// (an all-zero map stays zero).
pub fn residual_map(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    ensure!(x.shape() == y.shape(), Shape, "residual_map: {:?} vs {:?}", x.shape(), y.shape());
    ensure!(x.shape().len() == 3, Shape, "residual_map expects H x W x C, got {:?}", x.shape());
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut heat: Vec<f64> = x
        .data()
        .chunks_exact(c)
        .zip(y.data().chunks_exact(c))
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum())
        .collect();
    let max = heat.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        heat.iter_mut().for_each(|v| *v /= max);
    }
    Tensor::new(vec![h, w], heat)
}

/// Mean heat of the four quadrants: top-left, top-right, bottom-left,
/// bottom-right.
pub fn quadrant_means(map: &Tensor) -> Result<[f64; 4]> {
    ensure!(map.shape().len() == 2, Shape, "quadrant_means expects H x W, got {:?}", map.shape());
    let (h, w) = (map.shape()[0], map.shape()[1]);
    ensure!(h >= 2 && w >= 2, Shape, "map too small for quadrants");
    let (mh, mw) = (h / 2, w / 2);
    let mut sums = [0.0; 4];
    let mut counts = [0usize; 4];
    for i in 0..h {
        for j in 0..w {
            let q = usize::from(i >= mh) * 2 + usize::from(j >= mw);
            sums[q] += map.data()[i * w + j];
            counts[q] += 1;
        }
    }
    Ok(std::array::from_fn(|q| sums[q] / counts[q] as f64))
}

fn mean_latent(latents: &[LatentVector]) -> Result<Vec<f64>> {
    ensure!(!latents.is_empty(), Contract, "latent list is empty");
    let dim = latents[0].dim();
    ensure!(latents.iter().all(|z| z.dim() == dim), Contract, "latent dims differ");
    let mut mean = vec![0.0; dim];
    for z in latents {
        for (m, v) in mean.iter_mut().zip(z.values()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= latents.len() as f64);
    Ok(mean)
}

/// `mean(a) - mean(b)`.
pub fn attribute_vector(a: &[LatentVector], b: &[LatentVector]) -> Result<LatentVector> {
    let (ma, mb) = (mean_latent(a)?, mean_latent(b)?);
    ensure!(ma.len() == mb.len(), Contract, "latent dims differ: {} vs {}", ma.len(), mb.len());
    Ok(LatentVector(ma.iter().zip(&mb).map(|(x, y)| x - y).collect()))
}

/// `z + t * v`.
pub fn interpolate_latent(z: &LatentVector, v: &LatentVector, t: f64) -> Result<LatentVector> {
    ensure!(z.dim() == v.dim(), Contract, "latent dims differ: {} vs {}", z.dim(), v.dim());
    Ok(LatentVector(z.values().iter().zip(v.values()).map(|(a, b)| a + t * b).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_tabular_gan;

    fn tiny() -> (Network, Network) {
        let c = build_tabular_gan(6, 3, &[8]).unwrap();
        let mut rng = Prng::new(2);
        (
            Network::init(c.generator.clone(), &mut rng).unwrap(),
            Network::init(c.standalone_discriminator(), &mut rng).unwrap(),
        )
    }

    #[test]
    fn fixed_point_from_provided_start() {
        let (g, d) = tiny();
        let z0 = sample_latent(2, 3, LatentPrior::StandardNormal, &mut Prng::new(5));
        let x = g.predict(&z0).unwrap();
        let cfg = InversionConfig { steps: 20, init: LatentInit::Provided(z0.clone()), ..Default::default() };
        for r in invert_batch(&g, &x, Some(&d), &cfg, &mut Prng::new(1)).unwrap() {
            assert!(r.score <= 1e-10);
            assert!(r.residual.max() <= 1e-8);
            assert_eq!(r.trace.len(), 21);
        }
    }

    #[test]
    fn loss_decreases_from_random_start() {
        let (g, _) = tiny();
        let x = g.predict(&sample_latent(1, 3, LatentPrior::StandardNormal, &mut Prng::new(8))).unwrap();
        let cfg = InversionConfig { steps: 100, ..Default::default() };
        let r = invert_batch(&g, &x, None, &cfg, &mut Prng::new(3)).unwrap().remove(0);
        assert!(r.score < r.trace[0]);
        assert_eq!(r.score, *r.trace.last().unwrap());
    }

    #[test]
    fn zero_weight_ignores_discriminator() {
        let (g, d) = tiny();
        let x = Tensor::new(vec![1, 6], vec![0.1, -0.2, 0.3, 0.0, 0.5, -0.4]).unwrap();
        let cfg = InversionConfig { steps: 15, feature_weight: 0.0, ..Default::default() };
        let a = invert_batch(&g, &x, Some(&d), &cfg, &mut Prng::new(4)).unwrap();
        let b = invert_batch(&g, &x, None, &cfg, &mut Prng::new(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn restarts_never_worsen() {
        let (g, d) = tiny();
        let x = Tensor::new(vec![1, 6], vec![0.4, -0.1, 0.2, 0.3, -0.5, 0.1]).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..=4 {
            let cfg = InversionConfig { steps: 10, restarts: k, ..Default::default() };
            let s = invert_batch(&g, &x, Some(&d), &cfg, &mut Prng::new(6)).unwrap()[0].score;
            assert!(s <= prev);
            prev = s;
        }
    }

    #[test]
    fn networks_untouched() {
        let (g, d) = tiny();
        let (g0, d0) = (g.clone(), d.clone());
        let x = Tensor::new(vec![1, 6], vec![0.0; 6]).unwrap();
        invert_batch(&g, &x, Some(&d), &InversionConfig { steps: 5, ..Default::default() }, &mut Prng::new(0))
            .unwrap();
        assert_eq!(g, g0);
        assert_eq!(d, d0);
    }

    #[test]
    fn residual_map_contract() {
        let x = Tensor::new(vec![2, 2, 2], vec![0.0, 0.0, 1.0, 1.0, 0.5, 0.0, 0.0, 0.0]).unwrap();
        let y = Tensor::zeros(&[2, 2, 2]);
        let m = residual_map(&x, &y).unwrap();
        assert_eq!(m.data(), &[0.0, 1.0, 0.25, 0.0]);
        assert_eq!(residual_map(&x, &x).unwrap().data(), &[0.0; 4]);
    }

    #[test]
    fn latent_arithmetic() {
        let a = [LatentVector(vec![1.0, 0.0])];
        let b = [LatentVector(vec![0.0, 1.0])];
        assert_eq!(attribute_vector(&a, &b).unwrap().0, [1.0, -1.0]);
        assert!(attribute_vector(&[], &b).is_err());
        let z = LatentVector(vec![1.0, 2.0]);
        let v = LatentVector(vec![2.0, -2.0]);
        assert_eq!(interpolate_latent(&z, &v, 0.0).unwrap(), z);
        assert_eq!(interpolate_latent(&z, &v, 1.0).unwrap().0, [3.0, 0.0]);
        assert!(interpolate_latent(&z, &LatentVector(vec![1.0]), 0.5).is_err());
    }
}
