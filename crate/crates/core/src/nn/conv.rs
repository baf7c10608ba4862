//! Strided 2-D convolution kernels over NHWC buffers.
//!
//! Convolution and transposed convolution share one tap enumeration between
//! a "small" grid (h x w) and a "large" grid (H x W): small pixel `i` pairs
//! with large pixel `s*i + u - pad` for every kernel offset `u`. Convolution
//! reads the large grid into the small one; the transposed form writes the
//! small grid into the large one, which makes the two exact adjoints.
//!
//! Both are lowered to im2col/col2im plus a dense matrix product. Weights are
//! `[k, k, a, b]`, mapping `a` input channels to `b` output channels.

/// Spatial pairing between a small and a large grid under "same" padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub small_h: usize,
    pub small_w: usize,
    pub large_h: usize,
    pub large_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

fn same_pad(small: usize, large: usize, kernel: usize, stride: usize) -> usize {
    let total = ((small - 1) * stride + kernel).saturating_sub(large);
    total / 2
}

impl Geometry {
    /// Geometry of a "same"-padded convolution reading an `h x w` input.
    /// Output is `ceil(h/s) x ceil(w/s)`; odd padding goes bottom/right.
    pub fn conv_same(h: usize, w: usize, kernel: usize, stride: usize) -> Self {
        let small_h = h.div_ceil(stride);
        let small_w = w.div_ceil(stride);
        Geometry {
            small_h,
            small_w,
            large_h: h,
            large_w: w,
            kernel,
            stride,
            pad_top: same_pad(small_h, h, kernel, stride),
            pad_left: same_pad(small_w, w, kernel, stride),
        }
    }

    /// Geometry of a "same"-padded transposed convolution reading an `h x w`
    /// input. Output is `s*h x s*w`.
    pub fn transpose_same(h: usize, w: usize, kernel: usize, stride: usize) -> Self {
        Geometry::conv_same(h * stride, w * stride, kernel, stride)
    }

    pub fn small_pixels(&self) -> usize {
        self.small_h * self.small_w
    }

    pub fn large_pixels(&self) -> usize {
        self.large_h * self.large_w
    }

    pub fn taps(&self) -> usize {
        self.kernel * self.kernel
    }

    /// Calls `f(small_pixel, tap, large_pixel)` for every in-bounds tap, in a
    /// fixed order (small row, small col, kernel row, kernel col).
    #[inline(always)]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let k = self.kernel;
        for i in 0..self.small_h {
            for j in 0..self.small_w {
                let small = i * self.small_w + j;
                for u in 0..k {
                    let p = (self.stride * i + u) as isize - self.pad_top as isize;
                    if p < 0 || p >= self.large_h as isize {
                        continue;
                    }
                    let row = p as usize * self.large_w;
                    for v in 0..k {
                        let q = (self.stride * j + v) as isize - self.pad_left as isize;
                        if q < 0 || q >= self.large_w as isize {
                            continue;
                        }
                        f(small, u * k + v, row + q as usize);
                    }
                }
            }
        }
    }

    /// Samples per im2col block, keeping blocks cache-sized.
    fn chunk(&self) -> usize {
        (512 / self.small_pixels()).max(1)
    }
}

/// Writes the `[small_pixels, taps * ch]` patch matrix of one sample.
/// `out` must be zeroed; out-of-bounds taps stay zero.
fn im2col(g: &Geometry, large: &[f64], ch: usize, out: &mut [f64]) {
    let row = g.taps() * ch;
    g.for_each_tap(|si, t, li| {
        out[si * row + t * ch..si * row + (t + 1) * ch].copy_from_slice(&large[li * ch..(li + 1) * ch]);
    });
}

/// Adjoint of [`im2col`]: adds patch rows back onto the large grid.
fn col2im_add(g: &Geometry, cols: &[f64], ch: usize, large: &mut [f64]) {
    let row = g.taps() * ch;
    g.for_each_tap(|si, t, li| {
        let src = &cols[si * row + t * ch..si * row + (t + 1) * ch];
        for (d, s) in large[li * ch..(li + 1) * ch].iter_mut().zip(src) {
            *d += s;
        }
    });
}

/// Row-major matrix view: (data, rows, cols, transposed).
struct Mat<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    transposed: bool,
}

impl<'a> Mat<'a> {
    fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Mat { data, rows, cols, transposed: false }
    }

    fn t(self) -> Self {
        Mat { transposed: !self.transposed, ..self }
    }

    fn shape(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `c = a . b` with `c` row-major `m x n`; prior contents are ignored.
fn gemm_set(a: Mat, b: Mat, c: &mut [f64]) {
    gemm(a, b, 0.0, c)
}

/// `c += a . b` with `c` row-major `m x n`.
fn gemm_acc(a: Mat, b: Mat, c: &mut [f64]) {
    gemm(a, b, 1.0, c)
}

fn gemm(a: Mat, b: Mat, beta: f64, c: &mut [f64]) {
    let (m, k) = a.shape();
    let (k2, n) = b.shape();
    assert_eq!(k, k2, "inner dimensions differ");
    assert_eq!(c.len(), m * n, "output size");
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: the strides describe in-bounds views of `a.data`, `b.data`
    // (checked by `Mat::new`) and of `c` (length m * n, row-major).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn broadcast_bias(out: &mut [f64], bias: &[f64]) {
    for px in out.chunks_exact_mut(bias.len()) {
        px.copy_from_slice(bias);
    }
}

/// Convolution forward: `x` is `n` samples of `large x a`, result is `n`
/// samples of `small x b`.
pub fn conv_forward(g: &Geometry, x: &[f64], n: usize, a: usize, w: &[f64], bias: &[f64]) -> Vec<f64> {
    let b = bias.len();
    let kk = g.taps() * a;
    let (in_len, out_len) = (g.large_pixels() * a, g.small_pixels() * b);
    let mut out = vec![0.0; n * out_len];
    broadcast_bias(&mut out, bias);
    let mut buf = vec![0.0; g.chunk().min(n) * g.small_pixels() * kk];
    for s0 in (0..n).step_by(g.chunk()) {
        let s1 = (s0 + g.chunk()).min(n);
        let rows = (s1 - s0) * g.small_pixels();
        let cols = &mut buf[..rows * kk];
        cols.fill(0.0);
        for s in s0..s1 {
            let r0 = (s - s0) * g.small_pixels() * kk;
            im2col(g, &x[s * in_len..(s + 1) * in_len], a, &mut cols[r0..r0 + g.small_pixels() * kk]);
        }
        gemm_acc(Mat::new(cols, rows, kk), Mat::new(w, kk, b), &mut out[s0 * out_len..s1 * out_len]);
    }
    out
}

/// Input gradient of [`conv_forward`].
pub fn conv_backward_input(g: &Geometry, gy: &[f64], n: usize, a: usize, w: &[f64], b: usize) -> Vec<f64> {
    let kk = g.taps() * a;
    let (in_len, out_len) = (g.large_pixels() * a, g.small_pixels() * b);
    let mut gx = vec![0.0; n * in_len];
    let mut buf = vec![0.0; g.chunk().min(n) * g.small_pixels() * kk];
    for s0 in (0..n).step_by(g.chunk()) {
        let s1 = (s0 + g.chunk()).min(n);
        let rows = (s1 - s0) * g.small_pixels();
        let cols = &mut buf[..rows * kk];
        gemm_set(Mat::new(&gy[s0 * out_len..s1 * out_len], rows, b), Mat::new(w, kk, b).t(), cols);
        for s in s0..s1 {
            let r0 = (s - s0) * g.small_pixels() * kk;
            col2im_add(g, &cols[r0..r0 + g.small_pixels() * kk], a, &mut gx[s * in_len..(s + 1) * in_len]);
        }
    }
    gx
}

/// Weight gradient of [`conv_forward`], `[k*k*a, b]`.
pub fn conv_backward_weight(g: &Geometry, x: &[f64], gy: &[f64], n: usize, a: usize, b: usize) -> Vec<f64> {
    let kk = g.taps() * a;
    let (in_len, out_len) = (g.large_pixels() * a, g.small_pixels() * b);
    let mut gw = vec![0.0; kk * b];
    let mut buf = vec![0.0; g.chunk().min(n) * g.small_pixels() * kk];
    for s0 in (0..n).step_by(g.chunk()) {
        let s1 = (s0 + g.chunk()).min(n);
        let rows = (s1 - s0) * g.small_pixels();
        let cols = &mut buf[..rows * kk];
        cols.fill(0.0);
        for s in s0..s1 {
            let r0 = (s - s0) * g.small_pixels() * kk;
            im2col(g, &x[s * in_len..(s + 1) * in_len], a, &mut cols[r0..r0 + g.small_pixels() * kk]);
        }
        gemm_acc(Mat::new(cols, rows, kk).t(), Mat::new(&gy[s0 * out_len..s1 * out_len], rows, b), &mut gw);
    }
    gw
}

/// `[taps, a, b]` -> `[a, taps, b]`.
fn taps_to_rows(w: &[f64], taps: usize, a: usize, b: usize) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    for t in 0..taps {
        for c in 0..a {
            out[(c * taps + t) * b..(c * taps + t + 1) * b]
                .copy_from_slice(&w[(t * a + c) * b..(t * a + c + 1) * b]);
        }
    }
    out
}

/// `[a, taps, b]` -> `[taps, a, b]`.
fn rows_to_taps(w: &[f64], taps: usize, a: usize, b: usize) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    for c in 0..a {
        for t in 0..taps {
            out[(t * a + c) * b..(t * a + c + 1) * b]
                .copy_from_slice(&w[(c * taps + t) * b..(c * taps + t + 1) * b]);
        }
    }
    out
}

/// Transposed convolution forward: `x` is `n` samples of `small x a`,
/// result is `n` samples of `large x b`.
pub fn transpose_forward(g: &Geometry, x: &[f64], n: usize, a: usize, w: &[f64], bias: &[f64]) -> Vec<f64> {
    let b = bias.len();
    let kb = g.taps() * b;
    let wr = taps_to_rows(w, g.taps(), a, b);
    let (in_len, out_len) = (g.small_pixels() * a, g.large_pixels() * b);
    let mut out = vec![0.0; n * out_len];
    broadcast_bias(&mut out, bias);
    let mut buf = vec![0.0; g.chunk().min(n) * g.small_pixels() * kb];
    for s0 in (0..n).step_by(g.chunk()) {
        let s1 = (s0 + g.chunk()).min(n);
        let rows = (s1 - s0) * g.small_pixels();
        let cols = &mut buf[..rows * kb];
        gemm_set(Mat::new(&x[s0 * in_len..s1 * in_len], rows, a), Mat::new(&wr, a, kb), cols);
        for s in s0..s1 {
            let r0 = (s - s0) * g.small_pixels() * kb;
            col2im_add(g, &cols[r0..r0 + g.small_pixels() * kb], b, &mut out[s * out_len..(s + 1) * out_len]);
        }
    }
    out
}

/// Input and weight gradients of [`transpose_forward`]; the weight gradient
/// is `[k*k, a, b]`. Either can be skipped.
pub fn transpose_backward(
    g: &Geometry,
    x: &[f64],
    gy: &[f64],
    n: usize,
    w: &[f64],
    (a, b): (usize, usize),
    (want_x, want_w): (bool, bool),
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let kb = g.taps() * b;
    let wr = taps_to_rows(w, g.taps(), a, b);
    let (in_len, out_len) = (g.small_pixels() * a, g.large_pixels() * b);
    let mut gx = want_x.then(|| vec![0.0; n * in_len]);
    let mut gwr = want_w.then(|| vec![0.0; a * kb]);
    let mut buf = vec![0.0; g.chunk().min(n) * g.small_pixels() * kb];
    for s0 in (0..n).step_by(g.chunk()) {
        let s1 = (s0 + g.chunk()).min(n);
        let rows = (s1 - s0) * g.small_pixels();
        let cols = &mut buf[..rows * kb];
        cols.fill(0.0);
        for s in s0..s1 {
            let r0 = (s - s0) * g.small_pixels() * kb;
            im2col(g, &gy[s * out_len..(s + 1) * out_len], b, &mut cols[r0..r0 + g.small_pixels() * kb]);
        }
        if let Some(gx) = gx.as_mut() {
            gemm_set(Mat::new(cols, rows, kb), Mat::new(&wr, a, kb).t(), &mut gx[s0 * in_len..s1 * in_len]);
        }
        if let Some(gwr) = gwr.as_mut() {
            gemm_acc(Mat::new(&x[s0 * in_len..s1 * in_len], rows, a).t(), Mat::new(cols, rows, kb), gwr);
        }
    }
    (gx, gwr.map(|gwr| rows_to_taps(&gwr, g.taps(), a, b)))
}

/// Direct tap-loop evaluation, used as an independent oracle in tests.
#[cfg(test)]
pub(crate) mod reference {
    use super::Geometry;

    /// `small[i, o] += sum_taps sum_c large[p, c] * w[tap, c, o]`, one sample.
    pub fn gather(g: &Geometry, large: &[f64], a: usize, w: &[f64], small: &mut [f64], b: usize) {
        g.for_each_tap(|si, t, li| {
            for c in 0..a {
                for o in 0..b {
                    small[si * b + o] += large[li * a + c] * w[(t * a + c) * b + o];
                }
            }
        });
    }

    /// `large[p, o] += small[i, c] * w[tap, c, o]`, one sample.
    pub fn scatter(g: &Geometry, small: &[f64], a: usize, w: &[f64], large: &mut [f64], b: usize) {
        g.for_each_tap(|si, t, li| {
            for c in 0..a {
                for o in 0..b {
                    large[li * b + o] += small[si * a + c] * w[(t * a + c) * b + o];
                }
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Prng;

    fn random(n: usize, rng: &mut Prng) -> Vec<f64> {
        (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn same_geometry_matches_table_chain() {
        let g = Geometry::conv_same(32, 32, 3, 1);
        assert_eq!((g.small_h, g.pad_top), (32, 1));
        let g = Geometry::conv_same(32, 32, 3, 2);
        assert_eq!((g.small_h, g.pad_top), (16, 0));
        let g = Geometry::transpose_same(4, 4, 4, 2);
        assert_eq!((g.large_h, g.small_h, g.pad_top), (8, 4, 1));
        let g = Geometry::conv_same(5, 7, 3, 2);
        assert_eq!((g.small_h, g.small_w), (3, 4));
    }

    #[test]
    fn tap_count_interior() {
        let g = Geometry::conv_same(6, 6, 3, 1);
        let mut n = 0;
        g.for_each_tap(|_, _, _| n += 1);
        // 4 corners with 4 taps, 16 edge pixels with 6, 16 interior with 9.
        assert_eq!(n, 4 * 4 + 16 * 6 + 16 * 9);
    }

    #[test]
    fn lowered_kernels_match_direct_loops() {
        let mut rng = Prng::new(21);
        for (h, w, k, s, a, b, n) in [(5, 5, 3, 1, 2, 3, 2), (8, 6, 3, 2, 3, 4, 3), (7, 7, 4, 2, 1, 2, 1)] {
            let g = Geometry::conv_same(h, w, k, s);
            let x = random(n * h * w * a, &mut rng);
            let wt = random(k * k * a * b, &mut rng);
            let got = conv_forward(&g, &x, n, a, &wt, &vec![0.0; b]);
            let mut want = vec![0.0; n * g.small_pixels() * b];
            for i in 0..n {
                let (li, so) = (g.large_pixels() * a, g.small_pixels() * b);
                reference::gather(&g, &x[i * li..(i + 1) * li], a, &wt, &mut want[i * so..(i + 1) * so], b);
            }
            assert!(max_diff(&got, &want) < 1e-12);

            let xs = random(n * g.small_pixels() * a, &mut rng);
            let got = transpose_forward(&g, &xs, n, a, &wt, &vec![0.0; b]);
            let mut want = vec![0.0; n * g.large_pixels() * b];
            for i in 0..n {
                let (si, lo) = (g.small_pixels() * a, g.large_pixels() * b);
                reference::scatter(&g, &xs[i * si..(i + 1) * si], a, &wt, &mut want[i * lo..(i + 1) * lo], b);
            }
            assert!(max_diff(&got, &want) < 1e-12);
        }
    }

    #[test]
    fn tap_permutation_round_trips() {
        let w: Vec<f64> = (0..2 * 3 * 4).map(f64::from).collect();
        assert_eq!(rows_to_taps(&taps_to_rows(&w, 2, 3, 4), 2, 3, 4), w);
    }
}
