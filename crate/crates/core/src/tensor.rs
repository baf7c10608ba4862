//! Dense row-major `f64` tensors.

use crate::error::{ensure, Error, Result};

/// An n-dimensional array of `f64` in row-major order, with an optional
/// gradient buffer of the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
    Max,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        ensure!(
            shape.iter().all(|&d| d > 0),
            Shape,
            "dimensions must be positive, got {shape:?}"
        );
        ensure!(
            numel(&shape) == data.len(),
            Shape,
            "shape {shape:?} needs {} values, got {}",
            numel(&shape),
            data.len()
        );
        Ok(Tensor { shape, data, grad: None })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "dimensions must be positive: {shape:?}");
        Tensor { shape: shape.to_vec(), data: vec![value; numel(shape)], grad: None }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1], data: vec![value], grad: None }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "empty tensor");
        Tensor { shape: vec![data.len()], data, grad: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Adds `g` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        ensure!(
            g.len() == self.data.len(),
            Shape,
            "gradient length {} does not match tensor length {}",
            g.len(),
            self.data.len()
        );
        match &mut self.grad {
            Some(buf) => buf.iter_mut().zip(g).for_each(|(b, x)| *b += x),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        if let Some(buf) = &mut self.grad {
            buf.fill(0.0);
        }
    }

    pub fn take_grad(&mut self) -> Option<Vec<f64>> {
        self.grad.take()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        ensure!(
            numel(shape) == self.data.len() && shape.iter().all(|&d| d > 0),
            Shape,
            "cannot reshape {:?} into {shape:?}",
            self.shape
        );
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Pointwise map. Fails if any output is NaN or infinite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericDomain(format!(
                "map produced {} at index {i} (input {})",
                data[i], self.data[i]
            )));
        }
        Ok(Tensor { shape: self.shape.clone(), data, grad: None })
    }

    /// Sequential row-major reduction.
    pub fn reduce(&self, op: Reduction) -> f64 {
        assert!(!self.data.is_empty(), "reduction of an empty tensor");
        match op {
            Reduction::Sum => self.data.iter().fold(0.0, |acc, &v| acc + v),
            Reduction::Mean => self.reduce(Reduction::Sum) / self.data.len() as f64,
            Reduction::Max => self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn sum(&self) -> f64 {
        self.reduce(Reduction::Sum)
    }

    pub fn mean(&self) -> f64 {
        self.reduce(Reduction::Mean)
    }

    pub fn max(&self) -> f64 {
        self.reduce(Reduction::Max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Leading-axis slice `[start, start + count)`.
    pub fn slice_outer(&self, start: usize, count: usize) -> Result<Self> {
        ensure!(
            count > 0 && start + count <= self.shape[0],
            Shape,
            "rows {start}..{} out of range for leading dim {}",
            start + count,
            self.shape[0]
        );
        let row = self.data.len() / self.shape[0];
        let mut shape = self.shape.clone();
        shape[0] = count;
        Ok(Tensor {
            shape,
            data: self.data[start * row..(start + count) * row].to_vec(),
            grad: None,
        })
    }

    /// Gathers rows along the leading axis.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        ensure!(!rows.is_empty(), Contract, "no rows selected");
        let n = self.shape[0];
        let row = self.data.len() / n;
        let mut data = Vec::with_capacity(rows.len() * row);
        for &r in rows {
            ensure!(r < n, Shape, "row {r} out of range for leading dim {n}");
            data.extend_from_slice(&self.data[r * row..(r + 1) * row]);
        }
        let mut shape = self.shape.clone();
        shape[0] = rows.len();
        Ok(Tensor { shape, data, grad: None })
    }

    /// Concatenates along the leading axis.
    pub fn concat_outer(parts: &[&Tensor]) -> Result<Self> {
        ensure!(!parts.is_empty(), Contract, "nothing to concatenate");
        let tail = &parts[0].shape[1..];
        let mut lead = 0;
        let mut data = Vec::new();
        for p in parts {
            ensure!(
                &p.shape[1..] == tail,
                Shape,
                "cannot concatenate {:?} with {:?}",
                parts[0].shape,
                p.shape
            );
            lead += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(tail);
        Ok(Tensor { shape, data, grad: None })
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data.iter().zip(&other.data).fold(0.0, |acc, (a, b)| acc + a * b)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_examples() {
        let x = Tensor::from_vec(vec![1.0, -2.0]);
        assert_eq!(x.map(|v| -v).unwrap().data(), &[-1.0, 2.0]);
        let id = x.map(|v| v).unwrap();
        assert_eq!(id, x);
        let z = Tensor::from_vec(vec![0.0]);
        assert_eq!(z.map(f64::tanh).unwrap().data(), &[0.0]);
    }

    #[test]
    fn map_rejects_non_finite() {
        let x = Tensor::from_vec(vec![0.0, 1.0]);
        let err = x.map(|v| 1.0 / v).unwrap_err();
        assert!(matches!(err, Error::NumericDomain(_)));
    }

    #[test]
    fn reductions() {
        assert_eq!(Tensor::from_vec(vec![1.0, 2.0, 3.0]).sum(), 6.0);
        assert_eq!(Tensor::zeros(&[3, 4]).mean(), 0.0);
        assert_eq!(Tensor::from_vec(vec![-1.0, -5.0]).max(), -1.0);
    }

    #[test]
    #[should_panic(expected = "empty")]
    fn reduce_empty_panics() {
        let t = Tensor { shape: vec![0], data: vec![], grad: None };
        t.sum();
    }

    #[test]
    fn new_checks_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn grad_accumulates() {
        let mut t = Tensor::zeros(&[2]);
        t.accumulate_grad(&[1.0, 2.0]).unwrap();
        t.accumulate_grad(&[1.0, 2.0]).unwrap();
        assert_eq!(t.grad().unwrap(), &[2.0, 4.0]);
        t.zero_grad();
        assert_eq!(t.grad().unwrap(), &[0.0, 0.0]);
        assert!(t.accumulate_grad(&[1.0]).is_err());
    }

    #[test]
    fn rows_and_concat() {
        let t = Tensor::new(vec![3, 2], vec![0., 1., 2., 3., 4., 5.]).unwrap();
        let s = t.select_rows(&[2, 0]).unwrap();
        assert_eq!(s.data(), &[4., 5., 0., 1.]);
        let c = Tensor::concat_outer(&[&s, &t.slice_outer(1, 1).unwrap()]).unwrap();
        assert_eq!(c.shape(), &[3, 2]);
        assert_eq!(c.data(), &[4., 5., 0., 1., 2., 3.]);
    }
}
