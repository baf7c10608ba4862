//! Block-DCT quantization modelled on baseline JPEG, applied to each channel
//! with the luminance table.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{ensure, Result};
use crate::image::image_dims;
use crate::tensor::Tensor;

/// Standard luminance quantization table, row-major.
pub const LUMINANCE_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Quality-scaled table: `clamp(floor((Q*scale + 50) / 100), 1, 255)` with
/// `scale = 5000/q` below 50 and `200 - 2q` otherwise.
pub fn quant_table(q: f64) -> Result<[f64; 64]> {
    ensure!((1.0..=100.0).contains(&q), Contract, "quality {q} outside [1, 100]");
    let scale = if q < 50.0 { 5000.0 / q } else { 200.0 - 2.0 * q };
    Ok(LUMINANCE_TABLE.map(|b| ((b as f64 * scale + 50.0) / 100.0).floor().clamp(1.0, 255.0)))
}

/// Orthonormal DCT-II basis, `basis[k][n]`.
fn basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (k, row) in b.iter_mut().enumerate() {
            let alpha = if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (n, v) in row.iter_mut().enumerate() {
                *v = alpha * ((2 * n + 1) as f64 * k as f64 * PI / 16.0).cos();
            }
        }
        b
    })
}

fn dct(block: &[f64; 64]) -> [f64; 64] {
    let c = basis();
    let mut tmp = [0.0; 64];
    let mut out = [0.0; 64];
    for k in 0..8 {
        for j in 0..8 {
            tmp[k * 8 + j] = (0..8).map(|n| c[k][n] * block[n * 8 + j]).sum();
        }
    }
    for i in 0..8 {
        for l in 0..8 {
            out[i * 8 + l] = (0..8).map(|m| tmp[i * 8 + m] * c[l][m]).sum();
        }
    }
    out
}

fn idct(coef: &[f64; 64]) -> [f64; 64] {
    let c = basis();
    let mut tmp = [0.0; 64];
    let mut out = [0.0; 64];
    for n in 0..8 {
        for j in 0..8 {
            tmp[n * 8 + j] = (0..8).map(|k| c[k][n] * coef[k * 8 + j]).sum();
        }
    }
    for i in 0..8 {
        for m in 0..8 {
            out[i * 8 + m] = (0..8).map(|l| tmp[i * 8 + l] * c[l][m]).sum();
        }
    }
    out
}

/// Per channel: replicate-pad to multiples of 8, map to `[-128, 127]`,
/// quantize each block's DCT coefficients, invert, crop and clamp to `[0, 1]`.
pub fn jpeg_quality_sim(img: &Tensor, q: f64) -> Result<Tensor> {
    let table = quant_table(q)?;
    let [h, w, c] = image_dims(img)?;
    let (ph, pw) = (h.div_ceil(8) * 8, w.div_ceil(8) * 8);
    let src = img.data();
    let mut out = vec![0.0; src.len()];
    for ch in 0..c {
        for bi in (0..ph).step_by(8) {
            for bj in (0..pw).step_by(8) {
                let mut block = [0.0; 64];
                for u in 0..8 {
                    for v in 0..8 {
                        let (i, j) = ((bi + u).min(h - 1), (bj + v).min(w - 1));
                        block[u * 8 + v] = src[(i * w + j) * c + ch] * 255.0 - 128.0;
                    }
                }
                let mut coef = dct(&block);
                for (x, step) in coef.iter_mut().zip(&table) {
                    *x = (*x / step).round() * step;
                }
                let rec = idct(&coef);
                for u in 0..8.min(h - bi) {
                    for v in 0..8.min(w - bj) {
                        let (i, j) = (bi + u, bj + v);
                        out[(i * w + j) * c + ch] = ((rec[u * 8 + v] + 128.0) / 255.0).clamp(0.0, 1.0);
                    }
                }
            }
        }
    }
    Tensor::new(img.shape().to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_scaling() {
        assert!(quant_table(100.0).unwrap().iter().all(|&x| x == 1.0));
        assert_eq!(quant_table(50.0).unwrap().map(|x| x as u16), LUMINANCE_TABLE);
        // q = 75: scale 50, Q00 = floor((16*50 + 50)/100) = 8.
        assert_eq!(quant_table(75.0).unwrap()[0], 8.0);
        // q = 10: scale 500, Q00 = floor(8050/100) = 80, large entries saturate.
        let t = quant_table(10.0).unwrap();
        assert_eq!(t[0], 80.0);
        assert_eq!(t[63], 255.0);
        assert!(quant_table(0.0).is_err());
    }

    #[test]
    fn dct_is_orthonormal_round_trip() {
        let block: [f64; 64] = std::array::from_fn(|i| ((i * 37) % 255) as f64 - 128.0);
        let coef = dct(&block);
        let energy_in: f64 = block.iter().map(|x| x * x).sum();
        let energy_out: f64 = coef.iter().map(|x| x * x).sum();
        assert!((energy_in - energy_out).abs() < 1e-8 * energy_in);
        let back = idct(&coef);
        assert!(block.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn constant_block_has_only_dc() {
        let coef = dct(&[10.0; 64]);
        assert!((coef[0] - 80.0).abs() < 1e-12);
        assert!(coef[1..].iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn mid_gray_is_exact_fixed_point() {
        let img = Tensor::full(&[12, 9, 3], 128.0 / 255.0);
        for q in [60.0, 75.0, 100.0] {
            assert!(jpeg_quality_sim(&img, q).unwrap().max_abs_diff(&img) < 1e-15);
        }
    }
}
