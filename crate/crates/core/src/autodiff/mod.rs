//! Reverse-mode differentiation over a linear tape.
//!
//! Operations append nodes to a [`Tape`]; [`Tape::backward`] walks the nodes
//! in reverse, propagating gradients through interior nodes with a scratch
//! buffer and accumulating into the gradient buffers of leaf tensors.
//! Gradients of leaves therefore add up across repeated backward passes
//! until [`Tape::zero_grad`] clears them. Inputs that do not require a
//! gradient are skipped, so frozen parameters cost nothing in the backward
//! pass.

mod gradcheck;

pub use gradcheck::grad_check;

use crate::error::{ensure, Error, Result};
use crate::nn::activation::Activation;
use crate::nn::conv::{self, Geometry};
use crate::rng::Prng;
use crate::tensor::Tensor;

/// Clamp applied to probabilities inside the binary cross-entropy.
pub const BCE_EPSILON: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { input: Var, weight: Var, bias: Var, geom: Geometry },
    ConvTranspose2d { input: Var, weight: Var, bias: Var, geom: Geometry },
    Dense { input: Var, weight: Var, bias: Var },
    Activation { input: Var, kind: Activation },
    Dropout { input: Var, mask: Vec<f64> },
    Reshape { input: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { input: Var, factor: f64 },
    Sum { input: Var },
    Mean { input: Var },
    Bce { pred: Var, target: Vec<f64> },
    RowMeanAbsDiff { a: Var, b: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn check_finite(t: &Tensor, what: &str) -> Result<()> {
    if let Some(i) = t.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::NumericDomain(format!(
            "{what} produced non-finite value {} at index {i}",
            t.data()[i]
        )));
    }
    Ok(())
}

fn add_into(dst: &mut Option<Vec<f64>>, g: &[f64]) {
    match dst {
        Some(buf) => buf.iter_mut().zip(g).for_each(|(b, x)| *b += x),
        None => *dst = Some(g.to_vec()),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op, what: &str) -> Result<Var> {
        check_finite(&value, what)?;
        self.nodes.push(Node { value, requires_grad, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Adds a leaf. Leaves that require a gradient receive one on backward.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, requires_grad, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn take_value(&mut self, v: Var) -> Tensor {
        std::mem::replace(&mut self.nodes[v.0].value, Tensor::scalar(0.0))
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    /// `N x H x W x Cin` with `[k, k, Cin, Cout]` weights, "same" padding.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, stride: usize) -> Result<Var> {
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        let (n, h, wd, cin) = rank4(x, "conv2d input")?;
        let (k, cout) = kernel_dims(w, cin, "conv2d")?;
        ensure!(b.shape() == [cout], Shape, "conv2d bias {:?} != [{cout}]", b.shape());
        ensure!(stride >= 1, Contract, "stride must be positive");
        let geom = Geometry::conv_same(h, wd, k, stride);
        let (oh, ow) = (geom.small_h, geom.small_w);
        let out = conv::conv_forward(&geom, x.data(), n, cin, w.data(), b.data());
        let value = Tensor::new(vec![n, oh, ow, cout], out)?;
        let rg = self.needs(input) || self.needs(weight) || self.needs(bias);
        self.push(value, rg, Op::Conv2d { input, weight, bias, geom }, "conv2d")
    }

    /// `N x h x w x Cin` with `[k, k, Cin, Cout]` weights; output `N x s*h x s*w x Cout`.
    pub fn conv2d_transpose(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
    ) -> Result<Var> {
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        let (n, h, wd, cin) = rank4(x, "conv2d_transpose input")?;
        let (k, cout) = kernel_dims(w, cin, "conv2d_transpose")?;
        ensure!(b.shape() == [cout], Shape, "conv2d_transpose bias {:?} != [{cout}]", b.shape());
        ensure!(stride >= 1, Contract, "stride must be positive");
        let geom = Geometry::transpose_same(h, wd, k, stride);
        let (oh, ow) = (geom.large_h, geom.large_w);
        let out = conv::transpose_forward(&geom, x.data(), n, cin, w.data(), b.data());
        let value = Tensor::new(vec![n, oh, ow, cout], out)?;
        let rg = self.needs(input) || self.needs(weight) || self.needs(bias);
        self.push(value, rg, Op::ConvTranspose2d { input, weight, bias, geom }, "conv2d_transpose")
    }

    /// `N x n` times `[n, m]` plus `[m]`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        ensure!(x.shape().len() == 2, Shape, "dense input must be N x n, got {:?}", x.shape());
        let (batch, n) = (x.shape()[0], x.shape()[1]);
        ensure!(
            w.shape().len() == 2 && w.shape()[0] == n,
            Shape,
            "dense weights {:?} do not accept {n} inputs",
            w.shape()
        );
        let m = w.shape()[1];
        ensure!(b.shape() == [m], Shape, "dense bias {:?} != [{m}]", b.shape());
        let mut out = vec![0.0; batch * m];
        for (row, o) in x.data().chunks_exact(n).zip(out.chunks_exact_mut(m)) {
            o.copy_from_slice(b.data());
            for (i, &xi) in row.iter().enumerate() {
                for (oj, &wij) in o.iter_mut().zip(&w.data()[i * m..(i + 1) * m]) {
                    *oj += xi * wij;
                }
            }
        }
        let value = Tensor::new(vec![batch, m], out)?;
        let rg = self.needs(input) || self.needs(weight) || self.needs(bias);
        self.push(value, rg, Op::Dense { input, weight, bias }, "dense")
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Result<Var> {
        let x = self.value(input);
        let value = x.map(|v| kind.apply(v))?;
        let rg = self.needs(input);
        self.push(value, rg, Op::Activation { input, kind }, "activation")
    }

    /// Inverted dropout. Inference mode and `rate == 0` return `input` itself.
    pub fn dropout(&mut self, input: Var, rate: f64, rng: &mut Prng, training: bool) -> Result<Var> {
        ensure!((0.0..1.0).contains(&rate), Contract, "dropout rate {rate} outside [0, 1)");
        if !training || rate == 0.0 {
            return Ok(input);
        }
        let keep = 1.0 / (1.0 - rate);
        let x = self.value(input);
        let mask: Vec<f64> =
            (0..x.len()).map(|_| if rng.bernoulli(rate) { 0.0 } else { keep }).collect();
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.needs(input);
        self.push(value, rg, Op::Dropout { input, mask }, "dropout")
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(input).clone().reshape(shape)?;
        let rg = self.needs(input);
        self.push(value, rg, Op::Reshape { input }, "reshape")
    }

    /// Collapses all but the leading axis.
    pub fn flatten(&mut self, input: Var) -> Result<Var> {
        let shape = self.value(input).shape();
        let n = shape[0];
        let rest = shape[1..].iter().product();
        self.reshape(input, &[n, rest])
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, what: &str) -> Result<Tensor> {
        let (x, y) = (self.value(a), self.value(b));
        ensure!(x.shape() == y.shape(), Shape, "{what}: {:?} vs {:?}", x.shape(), y.shape());
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, |p, q| p + q, "add")?;
        let rg = self.needs(a) || self.needs(b);
        self.push(value, rg, Op::Add { a, b }, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, |p, q| p - q, "sub")?;
        let rg = self.needs(a) || self.needs(b);
        self.push(value, rg, Op::Sub { a, b }, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, |p, q| p * q, "mul")?;
        let rg = self.needs(a) || self.needs(b);
        self.push(value, rg, Op::Mul { a, b }, "mul")
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Result<Var> {
        let value = self.value(input).map(|v| v * factor)?;
        let rg = self.needs(input);
        self.push(value, rg, Op::Scale { input, factor }, "scale")
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(input).sum());
        let rg = self.needs(input);
        self.push(value, rg, Op::Sum { input }, "sum")
    }

    pub fn mean(&mut self, input: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(input).mean());
        let rg = self.needs(input);
        self.push(value, rg, Op::Mean { input }, "mean")
    }

    /// Mean binary cross-entropy with predictions clamped to `[eps, 1 - eps]`.
    pub fn bce(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let p = self.value(pred);
        ensure!(
            p.len() == target.len(),
            Shape,
            "bce: {} predictions vs {} targets",
            p.len(),
            target.len()
        );
        let value = Tensor::scalar(bce_value(p.data(), target.data()));
        let rg = self.needs(pred);
        self.push(value, rg, Op::Bce { pred, target: target.data().to_vec() }, "bce")
    }

    /// Per-row `mean_j |a[r, j] - b[r, j]|`, shape `[N]`.
    pub fn row_mean_abs_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        ensure!(
            x.shape() == y.shape(),
            Shape,
            "row_mean_abs_diff: {:?} vs {:?}",
            x.shape(),
            y.shape()
        );
        let n = x.shape()[0];
        let row = x.len() / n;
        let data = x
            .data()
            .chunks_exact(row)
            .zip(y.data().chunks_exact(row))
            .map(|(p, q)| p.iter().zip(q).fold(0.0, |acc, (u, v)| acc + (u - v).abs()) / row as f64)
            .collect();
        let value = Tensor::new(vec![n], data)?;
        let rg = self.needs(a) || self.needs(b);
        self.push(value, rg, Op::RowMeanAbsDiff { a, b }, "row_mean_abs_diff")
    }

    /// Back-propagates from the scalar `loss` into every leaf that requires a
    /// gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        ensure!(
            self.value(loss).len() == 1,
            Contract,
            "backward needs a scalar loss, got shape {:?}",
            self.value(loss).shape()
        );
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[idx].op {
                self.nodes[idx].value.accumulate_grad(&g)?;
                continue;
            }
            for (target, contribution) in self.node_backward(idx, &g) {
                add_into(&mut grads[target.0], &contribution);
            }
        }
        Ok(())
    }

    fn node_backward(&self, idx: usize, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[idx];
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { input, weight, bias, geom } => {
                let x = self.value(*input);
                let w = self.value(*weight);
                let (n, cin) = (x.shape()[0], x.shape()[3]);
                let cout = w.shape()[3];
                if self.needs(*input) {
                    out.push((*input, conv::conv_backward_input(geom, g, n, cin, w.data(), cout)));
                }
                if self.needs(*weight) {
                    out.push((*weight, conv::conv_backward_weight(geom, x.data(), g, n, cin, cout)));
                }
                if self.needs(*bias) {
                    out.push((*bias, channel_sums(g, cout)));
                }
            }
            Op::ConvTranspose2d { input, weight, bias, geom } => {
                let x = self.value(*input);
                let w = self.value(*weight);
                let (n, cin) = (x.shape()[0], x.shape()[3]);
                let cout = w.shape()[3];
                let (gx, gw) = conv::transpose_backward(
                    geom,
                    x.data(),
                    g,
                    n,
                    w.data(),
                    (cin, cout),
                    (self.needs(*input), self.needs(*weight)),
                );
                if let Some(gx) = gx {
                    out.push((*input, gx));
                }
                if let Some(gw) = gw {
                    out.push((*weight, gw));
                }
                if self.needs(*bias) {
                    out.push((*bias, channel_sums(g, cout)));
                }
            }
            Op::Dense { input, weight, bias } => {
                let x = self.value(*input);
                let w = self.value(*weight);
                let (n, m) = (w.shape()[0], w.shape()[1]);
                if self.needs(*input) {
                    let mut gx = vec![0.0; x.len()];
                    for (gr, gxr) in g.chunks_exact(m).zip(gx.chunks_exact_mut(n)) {
                        for (i, gxi) in gxr.iter_mut().enumerate() {
                            *gxi = w.data()[i * m..(i + 1) * m]
                                .iter()
                                .zip(gr)
                                .fold(0.0, |acc, (a, b)| acc + a * b);
                        }
                    }
                    out.push((*input, gx));
                }
                if self.needs(*weight) {
                    let mut gw = vec![0.0; w.len()];
                    for (xr, gr) in x.data().chunks_exact(n).zip(g.chunks_exact(m)) {
                        for (i, &xi) in xr.iter().enumerate() {
                            for (gwij, &gj) in gw[i * m..(i + 1) * m].iter_mut().zip(gr) {
                                *gwij += xi * gj;
                            }
                        }
                    }
                    out.push((*weight, gw));
                }
                if self.needs(*bias) {
                    out.push((*bias, channel_sums(g, m)));
                }
            }
            Op::Activation { input, kind } => {
                let x = self.value(*input).data();
                let y = node.value.data();
                let gx = g
                    .iter()
                    .zip(x.iter().zip(y))
                    .map(|(gi, (&xi, &yi))| gi * kind.derivative(xi, yi))
                    .collect();
                out.push((*input, gx));
            }
            Op::Dropout { input, mask } => {
                out.push((*input, g.iter().zip(mask).map(|(a, b)| a * b).collect()));
            }
            Op::Reshape { input } => out.push((*input, g.to_vec())),
            Op::Add { a, b } => {
                if self.needs(*a) {
                    out.push((*a, g.to_vec()));
                }
                if self.needs(*b) {
                    out.push((*b, g.to_vec()));
                }
            }
            Op::Sub { a, b } => {
                if self.needs(*a) {
                    out.push((*a, g.to_vec()));
                }
                if self.needs(*b) {
                    out.push((*b, g.iter().map(|v| -v).collect()));
                }
            }
            Op::Mul { a, b } => {
                let (x, y) = (self.value(*a).data(), self.value(*b).data());
                if self.needs(*a) {
                    out.push((*a, g.iter().zip(y).map(|(p, q)| p * q).collect()));
                }
                if self.needs(*b) {
                    out.push((*b, g.iter().zip(x).map(|(p, q)| p * q).collect()));
                }
            }
            Op::Scale { input, factor } => {
                out.push((*input, g.iter().map(|v| v * factor).collect()));
            }
            Op::Sum { input } => out.push((*input, vec![g[0]; self.value(*input).len()])),
            Op::Mean { input } => {
                let n = self.value(*input).len();
                out.push((*input, vec![g[0] / n as f64; n]));
            }
            Op::Bce { pred, target } => {
                let p = self.value(*pred).data();
                let n = p.len() as f64;
                let gp = p
                    .iter()
                    .zip(target)
                    .map(|(&pi, &ti)| {
                        if !(BCE_EPSILON..=1.0 - BCE_EPSILON).contains(&pi) {
                            0.0
                        } else {
                            -g[0] * (ti / pi - (1.0 - ti) / (1.0 - pi)) / n
                        }
                    })
                    .collect();
                out.push((*pred, gp));
            }
            Op::RowMeanAbsDiff { a, b } => {
                let (x, y) = (self.value(*a).data(), self.value(*b).data());
                let row = x.len() / g.len();
                let ga: Vec<f64> = x
                    .iter()
                    .zip(y)
                    .enumerate()
                    .map(|(i, (p, q))| {
                        let d = p - q;
                        let s = if d > 0.0 {
                            1.0
                        } else if d < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        s * g[i / row] / row as f64
                    })
                    .collect();
                if self.needs(*b) {
                    out.push((*b, ga.iter().map(|v| -v).collect()));
                }
                if self.needs(*a) {
                    out.push((*a, ga));
                }
            }
        }
        out
    }
}

/// Mean binary cross-entropy with predictions clamped to `[eps, 1 - eps]`.
pub fn bce_value(pred: &[f64], target: &[f64]) -> f64 {
    let total = pred.iter().zip(target).fold(0.0, |acc, (&p, &t)| {
        let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
        acc + t * p.ln() + (1.0 - t) * (1.0 - p).ln()
    });
    -total / pred.len() as f64
}

fn channel_sums(g: &[f64], c: usize) -> Vec<f64> {
    let mut out = vec![0.0; c];
    for px in g.chunks_exact(c) {
        for (o, v) in out.iter_mut().zip(px) {
            *o += v;
        }
    }
    out
}

fn rank4(x: &Tensor, what: &str) -> Result<(usize, usize, usize, usize)> {
    match *x.shape() {
        [n, h, w, c] => Ok((n, h, w, c)),
        ref s => Err(Error::Shape(format!("{what} must be N x H x W x C, got {s:?}"))),
    }
}

fn kernel_dims(w: &Tensor, cin: usize, what: &str) -> Result<(usize, usize)> {
    match *w.shape() {
        [k, k2, c, cout] if k == k2 && c == cin => Ok((k, cout)),
        ref s => Err(Error::Shape(format!(
            "{what} kernel {s:?} incompatible with {cin} input channels"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn conv_hand_sum() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 2, 2, 1], &[1., 2., 3., 4.]));
        let w = tape.constant(Tensor::full(&[2, 2, 1, 1], 1.0));
        let b = tape.constant(Tensor::zeros(&[1]));
        let y = tape.conv2d(x, w, b, 1).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 2, 2, 1]);
        assert_eq!(tape.value(y).data()[0], 10.0);
    }

    #[test]
    fn conv_identity_kernel() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 1, 1, 1], &[3.5]));
        let w = tape.constant(t(&[1, 1, 1, 1], &[1.0]));
        let b = tape.constant(Tensor::zeros(&[1]));
        let y = tape.conv2d(x, w, b, 1).unwrap();
        assert_eq!(tape.value(y).data(), &[3.5]);
        let y = tape.conv2d_transpose(x, w, b, 1).unwrap();
        assert_eq!(tape.value(y).data(), &[3.5]);
    }

    #[test]
    fn conv_output_shapes() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 32, 32, 3]));
        let w = tape.constant(Tensor::zeros(&[3, 3, 3, 64]));
        let b = tape.constant(Tensor::zeros(&[64]));
        let y = tape.conv2d(x, w, b, 1).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 32, 32, 64]);

        let x = tape.constant(Tensor::zeros(&[1, 32, 32, 64]));
        let w = tape.constant(Tensor::zeros(&[3, 3, 64, 128]));
        let b = tape.constant(Tensor::zeros(&[128]));
        let y = tape.conv2d(x, w, b, 2).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 16, 16, 128]);

        let x = tape.constant(Tensor::zeros(&[1, 4, 4, 256]));
        let w = tape.constant(Tensor::zeros(&[4, 4, 256, 128]));
        let b = tape.constant(Tensor::zeros(&[128]));
        let y = tape.conv2d_transpose(x, w, b, 2).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 8, 8, 128]);
    }

    #[test]
    fn conv_shape_mismatch_is_error() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 4, 4, 2]));
        let w = tape.constant(Tensor::zeros(&[3, 3, 3, 1]));
        let b = tape.constant(Tensor::zeros(&[1]));
        assert!(matches!(tape.conv2d(x, w, b, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn dense_hand_arithmetic() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 2], &[1., 2.]));
        let w = tape.constant(t(&[2, 1], &[1., 1.]));
        let b = tape.constant(t(&[1], &[0.5]));
        let y = tape.dense(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[3.5]);
    }

    #[test]
    fn dense_identity() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 3], &[1., -2., 7.]));
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 4] = 1.0;
        }
        let w = tape.constant(t(&[3, 3], &eye));
        let b = tape.constant(Tensor::zeros(&[3]));
        let y = tape.dense(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[1., -2., 7.]);
    }

    #[test]
    fn bce_examples() {
        assert!((bce_value(&[0.5], &[1.0]) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_value(&[1.0, 0.0], &[1.0, 0.0]) <= 1e-11);
        let expected = -0.5 * (0.9f64.ln() + 0.9f64.ln());
        assert!((bce_value(&[0.9, 0.1], &[1.0, 0.0]) - expected).abs() < 1e-15);
        assert!((expected - 0.105361).abs() < 1e-6);
    }

    #[test]
    fn dropout_modes() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[100], 1.0));
        let mut rng = Prng::new(1);
        assert_eq!(tape.dropout(x, 0.4, &mut rng, false).unwrap(), x);
        assert_eq!(tape.dropout(x, 0.0, &mut rng, true).unwrap(), x);
        let y = tape.dropout(x, 0.5, &mut rng, true).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0 || v == 2.0));
        assert!(tape.dropout(x, 1.0, &mut rng, true).is_err());
    }

    // With 10^5 units the zero fraction has std sqrt(0.24/10^5) ~ 0.0015, so
    // [0.39, 0.41] is a ~6.5 sigma window.
    #[test]
    fn dropout_rate_binomial() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[100_000], 1.0));
        for seed in 0..5 {
            let y = tape.dropout(x, 0.4, &mut Prng::new(seed), true).unwrap();
            let zeros = tape.value(y).data().iter().filter(|&&v| v == 0.0).count();
            let frac = zeros as f64 / 1e5;
            assert!((0.39..=0.41).contains(&frac), "seed {seed}: {frac}");
            let kept = tape.value(y).data().iter().find(|&&v| v != 0.0).unwrap();
            assert_eq!(*kept, 1.0 / 0.6);
        }
    }

    #[test]
    fn backward_accumulates_only_into_leaves() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1., 2.]));
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2., 4.]);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[4., 8.]);
        tape.zero_grad();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2., 4.]);
    }

    #[test]
    fn frozen_leaves_get_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[1, 2], &[1., 2.]));
        let w = tape.constant(t(&[2, 1], &[1., 1.]));
        let b = tape.constant(t(&[1], &[0.0]));
        let y = tape.dense(x, w, b).unwrap();
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        assert!(tape.grad(w).is_none());
        assert_eq!(tape.grad(x).unwrap(), &[1., 1.]);
    }

    #[test]
    fn backward_needs_scalar() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1., 2.]));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn non_finite_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[1], &[f64::MAX]));
        assert!(matches!(tape.scale(x, 10.0), Err(Error::NumericDomain(_))));
    }
}
