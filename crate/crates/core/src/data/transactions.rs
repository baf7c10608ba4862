//! Synthetic tabular transactions: a two-cluster Gaussian mixture of normal
//! rows plus a shifted, inflated fraud component.

use crate::error::{ensure, Result};
use crate::rng::Prng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TransactionParams {
    pub cluster_means: [Vec<f64>; 2],
    /// Per-feature standard deviations (diagonal covariance).
    pub cluster_stds: [Vec<f64>; 2],
    /// Probability of the first cluster.
    pub cluster_weight: f64,
    /// Fraud rows: first cluster's mean plus this shift.
    pub fraud_shift: Vec<f64>,
    /// Fraud rows: first cluster's stds times this factor.
    pub fraud_scale: f64,
    /// Standardization applied to every row, estimated on the normals.
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransactionDataset {
    /// `n x d`.
    pub rows: Tensor,
    pub labels: Vec<u8>,
    pub params: TransactionParams,
}

pub fn gen_transactions(n: usize, d: usize, seed: u64, fraud_rate: f64) -> Result<TransactionDataset> {
    ensure!(n >= 1 && d >= 1, Contract, "n and d must be positive");
    ensure!((0.0..1.0).contains(&fraud_rate), Contract, "fraud rate {fraud_rate} outside [0, 1)");
    let n_fraud = (n as f64 * fraud_rate).round() as usize;
    ensure!(n_fraud < n, Contract, "no normal rows left to standardize on");
    let mut rng = Prng::new(seed);

    let mean = |rng: &mut Prng| (0..d).map(|_| 2.0 * rng.normal()).collect::<Vec<_>>();
    let stds = |rng: &mut Prng| (0..d).map(|_| rng.uniform_range(0.5, 1.5)).collect::<Vec<_>>();
    let cluster_means = [mean(&mut rng), mean(&mut rng)];
    let cluster_stds = [stds(&mut rng), stds(&mut rng)];
    let cluster_weight = rng.uniform_range(0.3, 0.7);
    let direction: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let fraud_shift: Vec<f64> = direction.iter().map(|v| 4.0 * v / norm).collect();
    let fraud_scale = 2.0;

    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut labels = vec![0u8; n];
    for &i in &order[..n_fraud] {
        labels[i] = 1;
    }

    let mut data = Vec::with_capacity(n * d);
    for &label in &labels {
        let (mu, sd): (Vec<f64>, Vec<f64>) = if label == 1 {
            (
                cluster_means[0].iter().zip(&fraud_shift).map(|(m, s)| m + s).collect(),
                cluster_stds[0].iter().map(|s| s * fraud_scale).collect(),
            )
        } else {
            let c = usize::from(!rng.bernoulli(cluster_weight));
            (cluster_means[c].clone(), cluster_stds[c].clone())
        };
        data.extend(mu.iter().zip(&sd).map(|(m, s)| m + s * rng.normal()));
    }

    let normals: Vec<&[f64]> =
        data.chunks_exact(d).zip(&labels).filter(|(_, &l)| l == 0).map(|(r, _)| r).collect();
    let count = normals.len() as f64;
    let feature_mean: Vec<f64> = (0..d).map(|j| normals.iter().map(|r| r[j]).sum::<f64>() / count).collect();
    let feature_std: Vec<f64> = (0..d)
        .map(|j| {
            let var = normals.iter().map(|r| (r[j] - feature_mean[j]).powi(2)).sum::<f64>() / count;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    for row in data.chunks_exact_mut(d) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - feature_mean[j]) / feature_std[j];
        }
    }

    Ok(TransactionDataset {
        rows: Tensor::new(vec![n, d], data)?,
        labels,
        params: TransactionParams {
            cluster_means,
            cluster_stds,
            cluster_weight,
            fraud_shift,
            fraud_scale,
            feature_mean,
            feature_std,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_determinism() {
        let a = gen_transactions(500, 4, 3, 0.05).unwrap();
        assert_eq!(a.labels.iter().filter(|&&l| l == 1).count(), 25);
        assert_eq!(a, gen_transactions(500, 4, 3, 0.05).unwrap());
        assert!(gen_transactions(50, 2, 1, 0.0).unwrap().labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn normals_are_standardized() {
        let ds = gen_transactions(2000, 5, 11, 0.1).unwrap();
        let d = 5;
        let normals: Vec<&[f64]> =
            ds.rows.data().chunks_exact(d).zip(&ds.labels).filter(|(_, &l)| l == 0).map(|(r, _)| r).collect();
        for j in 0..d {
            let m = normals.iter().map(|r| r[j]).sum::<f64>() / normals.len() as f64;
            let v = normals.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / normals.len() as f64;
            assert!(m.abs() < 1e-9);
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(gen_transactions(0, 3, 1, 0.1).is_err());
        assert!(gen_transactions(10, 0, 1, 0.1).is_err());
        assert!(gen_transactions(10, 3, 1, 1.0).is_err());
    }
}
