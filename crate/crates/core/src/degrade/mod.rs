//! Four-stage image degradation: Gaussian blur, down/up resampling, additive
//! white Gaussian noise and JPEG-style quantization.
//!
//! Images are `H x W x C` tensors with values in `[0, 1]`.

mod jpeg;

pub use jpeg::{jpeg_quality_sim, quant_table, LUMINANCE_TABLE};

use std::fmt;

use crate::error::{ensure, Result};
use crate::image::image_dims;
use crate::rng::Prng;
use crate::tensor::Tensor;

pub const SIGMA_RANGE: (f64, f64) = (0.2, 10.0);
pub const SCALE_RANGE: (f64, f64) = (1.0, 8.0);
pub const NOISE_RANGE: (f64, f64) = (0.0, 15.0);
pub const QUALITY_RANGE: (f64, f64) = (60.0, 100.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationParams {
    /// Blur standard deviation in pixels.
    pub sigma: f64,
    /// Down-sampling factor.
    pub r: f64,
    /// Noise standard deviation on the 0-255 scale.
    pub delta: f64,
    /// JPEG quality factor.
    pub q: f64,
}

fn in_range(v: f64, (lo, hi): (f64, f64)) -> bool {
    (lo..=hi).contains(&v)
}

impl DegradationParams {
    pub fn new(sigma: f64, r: f64, delta: f64, q: f64) -> Result<Self> {
        let p = DegradationParams { sigma, r, delta, q };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(in_range(self.sigma, SIGMA_RANGE), Contract, "sigma {} outside [0.2, 10]", self.sigma);
        ensure!(in_range(self.r, SCALE_RANGE), Contract, "r {} outside [1, 8]", self.r);
        ensure!(in_range(self.delta, NOISE_RANGE), Contract, "delta {} outside [0, 15]", self.delta);
        ensure!(in_range(self.q, QUALITY_RANGE), Contract, "q {} outside [60, 100]", self.q);
        Ok(())
    }
}

impl fmt::Display for DegradationParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sigma={} r={} delta={} q={}", self.sigma, self.r, self.delta, self.q)
    }
}

/// Draws every parameter uniformly from its range.
pub fn sample_degradation(rng: &mut Prng) -> DegradationParams {
    DegradationParams {
        sigma: rng.uniform_range(SIGMA_RANGE.0, SIGMA_RANGE.1),
        r: rng.uniform_range(SCALE_RANGE.0, SCALE_RANGE.1),
        delta: rng.uniform_range(NOISE_RANGE.0, NOISE_RANGE.1),
        q: rng.uniform_range(QUALITY_RANGE.0, QUALITY_RANGE.1),
    }
}

/// As [`sample_degradation`] but with `r` drawn uniformly from `{1, ..., 8}`.
pub fn sample_degradation_integer(rng: &mut Prng) -> DegradationParams {
    let mut p = sample_degradation(rng);
    p.r = (1 + rng.index(8)) as f64;
    p
}

/// Odd-sided normalized Gaussian kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    side: usize,
    weights: Vec<f64>,
}

impl KernelMatrix {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn radius(&self) -> usize {
        self.side / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at offset `(du, dv)` from the center.
    pub fn at(&self, du: isize, dv: isize) -> f64 {
        let r = self.radius() as isize;
        self.weights[((du + r) * self.side as isize + dv + r) as usize]
    }
}

/// Side `2*ceil(3 sigma) + 1`, weights `exp(-(u^2+v^2) / (2 sigma^2))` scaled
/// to sum to one.
pub fn gaussian_kernel(sigma: f64) -> Result<KernelMatrix> {
    ensure!(sigma > 0.0 && sigma.is_finite(), Contract, "sigma must be positive, got {sigma}");
    let radius = (3.0 * sigma).ceil() as isize;
    let side = 2 * radius as usize + 1;
    let mut weights = Vec::with_capacity(side * side);
    for u in -radius..=radius {
        for v in -radius..=radius {
            weights.push((-((u * u + v * v) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(KernelMatrix { side, weights })
}

/// Per-channel 2-D convolution with edge-replicate padding.
pub fn blur(img: &Tensor, k: &KernelMatrix) -> Result<Tensor> {
    let [h, w, c] = image_dims(img)?;
    let r = k.radius() as isize;
    let src = img.data();
    let mut out = vec![0.0; src.len()];
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    for i in 0..h {
        for j in 0..w {
            let dst = &mut out[(i * w + j) * c..(i * w + j + 1) * c];
            for du in -r..=r {
                let row = clamp(i as isize + du, h) * w;
                for dv in -r..=r {
                    let weight = k.at(du, dv);
                    let p = (row + clamp(j as isize + dv, w)) * c;
                    for (d, s) in dst.iter_mut().zip(&src[p..p + c]) {
                        *d += weight * s;
                    }
                }
            }
        }
    }
    Tensor::new(img.shape().to_vec(), out)
}

/// Bilinear resize with half-pixel centers and clamped borders.
fn resize(src: &[f64], (h, w, c): (usize, usize, usize), (oh, ow): (usize, usize)) -> Vec<f64> {
    let coords = |n_out: usize, n_in: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|i| {
                let x = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let lo = x.floor() as usize;
                (lo, (lo + 1).min(n_in - 1), x - lo as f64)
            })
            .collect()
    };
    let rows = coords(oh, h);
    let cols = coords(ow, w);
    let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
    let mut out = Vec::with_capacity(oh * ow * c);
    for &(r0, r1, fr) in &rows {
        for &(c0, c1, fc) in &cols {
            for ch in 0..c {
                let at = |r: usize, col: usize| src[(r * w + col) * c + ch];
                let top = lerp(at(r0, c0), at(r0, c1), fc);
                let bottom = lerp(at(r1, c0), at(r1, c1), fc);
                out.push(lerp(top, bottom, fr));
            }
        }
    }
    out
}

/// Bilinear downsample to `ceil(H/r) x ceil(W/r)` and back up to `H x W`.
pub fn resample(img: &Tensor, r: f64) -> Result<Tensor> {
    ensure!(in_range(r, SCALE_RANGE), Contract, "r {r} outside [1, 8]");
    let [h, w, c] = image_dims(img)?;
    let small = ((h as f64 / r).ceil() as usize, (w as f64 / r).ceil() as usize);
    let down = resize(img.data(), (h, w, c), small);
    let up = resize(&down, (small.0, small.1, c), (h, w));
    Tensor::new(img.shape().to_vec(), up)
}

/// Adds i.i.d. `N(0, (delta/255)^2)` noise and clamps to `[0, 1]`.
pub fn add_noise(img: &Tensor, delta: f64, rng: &mut Prng) -> Result<Tensor> {
    ensure!(delta >= 0.0 && delta.is_finite(), Contract, "delta must be non-negative, got {delta}");
    if delta == 0.0 {
        return Ok(img.clone());
    }
    let std = delta / 255.0;
    let data = img.data().iter().map(|&v| (v + std * rng.normal()).clamp(0.0, 1.0)).collect();
    Tensor::new(img.shape().to_vec(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Blur,
    Resample,
    Noise,
    Jpeg,
}

pub const STAGE_ORDER: [Stage; 4] = [Stage::Blur, Stage::Resample, Stage::Noise, Stage::Jpeg];

/// Applies the listed stages in the given order.
pub fn apply_stages(img: &Tensor, stages: &[Stage], p: &DegradationParams, rng: &mut Prng) -> Result<Tensor> {
    p.validate()?;
    let mut x = img.clone();
    for stage in stages {
        x = match stage {
            Stage::Blur => blur(&x, &gaussian_kernel(p.sigma)?)?,
            Stage::Resample => resample(&x, p.r)?,
            Stage::Noise => add_noise(&x, p.delta, rng)?,
            Stage::Jpeg => jpeg_quality_sim(&x, p.q)?,
        };
    }
    Ok(x)
}

/// Blur, resample, noise, then JPEG quantization.
pub fn degrade(img: &Tensor, p: &DegradationParams, rng: &mut Prng) -> Result<Tensor> {
    apply_stages(img, &STAGE_ORDER, p, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_image(h: usize, w: usize, c: usize, seed: u64) -> Tensor {
        let mut rng = Prng::new(seed);
        Tensor::new(vec![h, w, c], (0..h * w * c).map(|_| rng.uniform()).collect()).unwrap()
    }

    #[test]
    fn kernel_sides_and_ratio() {
        assert_eq!(gaussian_kernel(0.2).unwrap().side(), 3);
        assert_eq!(gaussian_kernel(1.0).unwrap().side(), 7);
        assert_eq!(gaussian_kernel(10.0).unwrap().side(), 61);
        let k = gaussian_kernel(1.0).unwrap();
        assert!((k.at(0, 0) / k.at(0, 1) - 0.5f64.exp()).abs() < 1e-12);
        assert!(gaussian_kernel(0.0).is_err());
    }

    #[test]
    fn impulse_response_is_kernel() {
        let k = gaussian_kernel(0.8).unwrap();
        let mut img = Tensor::zeros(&[11, 11, 1]);
        img.data_mut()[5 * 11 + 5] = 1.0;
        let out = blur(&img, &k).unwrap();
        let r = k.radius() as isize;
        for du in -r..=r {
            for dv in -r..=r {
                let v = out.data()[((5 + du) * 11 + 5 + dv) as usize];
                assert!((v - k.at(du, dv)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn resample_constant_is_exact() {
        let img = Tensor::full(&[9, 7, 2], 0.37);
        for r in [1.0, 1.7, 3.0, 8.0] {
            assert_eq!(resample(&img, r).unwrap(), img);
        }
    }

    #[test]
    fn resample_identity_at_unit_scale() {
        let img = noise_image(10, 6, 3, 3);
        assert_eq!(resample(&img, 1.0).unwrap(), img);
    }

    #[test]
    fn noise_zero_and_determinism() {
        let img = noise_image(4, 4, 3, 1);
        assert_eq!(add_noise(&img, 0.0, &mut Prng::new(1)).unwrap(), img);
        let a = add_noise(&img, 7.0, &mut Prng::new(9)).unwrap();
        let b = add_noise(&img, 7.0, &mut Prng::new(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn params_validated() {
        assert!(DegradationParams::new(0.1, 2.0, 3.0, 80.0).is_err());
        assert!(DegradationParams::new(1.0, 9.0, 3.0, 80.0).is_err());
        assert!(DegradationParams::new(1.0, 2.0, 16.0, 80.0).is_err());
        assert!(DegradationParams::new(1.0, 2.0, 3.0, 59.0).is_err());
        assert!(DegradationParams::new(0.2, 1.0, 0.0, 100.0).is_ok());
    }

    #[test]
    fn integer_scale_mode() {
        let mut rng = Prng::new(4);
        for _ in 0..200 {
            let p = sample_degradation_integer(&mut rng);
            assert_eq!(p.r.fract(), 0.0);
            p.validate().unwrap();
        }
    }
}
