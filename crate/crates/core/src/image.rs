//! 8-bit raster images and their float views.

use crate::error::{ensure, Result};
use crate::tensor::Tensor;

/// Interleaved `height x width x channels` bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        ensure!(
            height > 0 && width > 0 && channels > 0,
            Shape,
            "image dims must be positive, got {height}x{width}x{channels}"
        );
        ensure!(
            pixels.len() == height * width * channels,
            Shape,
            "{height}x{width}x{channels} image needs {} bytes, got {}",
            height * width * channels,
            pixels.len()
        );
        Ok(Image { height, width, channels, pixels })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Self {
        Image { height, width, channels, pixels: vec![value; height * width * channels] }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[u8] {
        let i = (row * self.width + col) * self.channels;
        &self.pixels[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [u8] {
        let i = (row * self.width + col) * self.channels;
        &mut self.pixels[i..i + self.channels]
    }

    /// `H x W x C` tensor with values `p / 255`.
    pub fn to_unit(&self) -> Tensor {
        let data = self.pixels.iter().map(|&p| p as f64 / 255.0).collect();
        Tensor::new(self.shape().to_vec(), data).expect("image dims are valid")
    }

    /// Inverse of [`Image::to_unit`], rounding and clamping to bytes.
    pub fn from_unit(t: &Tensor) -> Result<Self> {
        let [h, w, c] = image_dims(t)?;
        let pixels = t.data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
        Image::new(h, w, c, pixels)
    }

    /// Tiles equally sized images into a `rows x cols` grid, row-major,
    /// padding missing cells with `fill`.
    pub fn grid(images: &[Image], cols: usize, fill: u8) -> Result<Self> {
        ensure!(!images.is_empty() && cols > 0, Contract, "grid needs images and columns");
        let [h, w, c] = images[0].shape();
        ensure!(images.iter().all(|im| im.shape() == [h, w, c]), Shape, "grid images differ in shape");
        let rows = images.len().div_ceil(cols);
        let mut out = Image::filled(rows * h, cols * w, c, fill);
        for (k, im) in images.iter().enumerate() {
            let (r0, c0) = ((k / cols) * h, (k % cols) * w);
            for r in 0..h {
                let dst = ((r0 + r) * out.width + c0) * c;
                out.pixels[dst..dst + w * c].copy_from_slice(&im.pixels[r * w * c..(r + 1) * w * c]);
            }
        }
        Ok(out)
    }
}

pub(crate) fn image_dims(t: &Tensor) -> Result<[usize; 3]> {
    ensure!(t.shape().len() == 3, Shape, "expected an H x W x C image, got {:?}", t.shape());
    Ok([t.shape()[0], t.shape()[1], t.shape()[2]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_round_trip_is_lossless() {
        let im = Image::new(2, 128, 1, (0..=255).collect()).unwrap();
        assert_eq!(Image::from_unit(&im.to_unit()).unwrap(), im);
    }

    #[test]
    fn grid_layout() {
        let a = Image::filled(1, 2, 1, 1);
        let b = Image::filled(1, 2, 1, 2);
        let c = Image::filled(1, 2, 1, 3);
        let g = Image::grid(&[a, b, c], 2, 0).unwrap();
        assert_eq!((g.height, g.width), (2, 4));
        assert_eq!(g.pixels, [1, 1, 2, 2, 3, 3, 0, 0]);
    }

    #[test]
    fn size_mismatch_rejected() {
        assert!(Image::new(2, 2, 3, vec![0; 11]).is_err());
        assert!(Image::new(0, 2, 3, vec![]).is_err());
    }
}
