//! Principal component analysis by eigendecomposition of the sample covariance.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{quantize, FeatureMatrix, ModelError, Result};

/// Rows per block when accumulating the covariance.
const CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaTransform {
    pub mean: Vec<f64>,
    /// `n_components` rows of length `dim`, by decreasing eigenvalue. Each
    /// row's largest-magnitude entry is positive.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

/// Fits the top `n_components` principal axes.
pub fn fit_pca(features: &FeatureMatrix, n_components: usize) -> Result<PcaTransform> {
    let (n, dim) = (features.rows(), features.dim());
    if n < 2 {
        return Err(ModelError::Pca(format!("need at least 2 samples, got {n}")));
    }
    if n_components == 0 || n_components > dim {
        return Err(ModelError::Pca(format!(
            "n_components must lie in 1..={dim}, got {n_components}"
        )));
    }
    let mut mean = vec![0.0; dim];
    for row in features.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let block = DMatrix::from_fn(end - start, dim, |r, c| features.row(start + r)[c] - mean[c]);
        cov.gemm_tr(1.0, &block, &block, 1.0);
        start = end;
    }
    cov /= (n - 1) as f64;

    let total: f64 = cov.diagonal().iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(ModelError::Pca("data has zero variance".into()));
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(n_components);
    let mut explained_variance = Vec::with_capacity(n_components);
    for &idx in order.iter().take(n_components) {
        let mut axis: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let lead = axis
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if v.abs() > axis[best].abs() { i } else { best });
        if axis[lead] < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        quantize(&mut axis);
        components.push(axis);
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }
    quantize(&mut mean);
    let explained_variance_ratio = explained_variance.iter().map(|v| v / total).collect();
    Ok(PcaTransform {
        mean,
        components,
        explained_variance,
        explained_variance_ratio,
    })
}

impl PcaTransform {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, features: &FeatureMatrix) -> Result<FeatureMatrix> {
        if features.dim() != self.input_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim(),
                got: features.dim(),
            });
        }
        let mut data = Vec::with_capacity(features.rows() * self.n_components());
        let mut centered = vec![0.0; self.input_dim()];
        for row in features.iter_rows() {
            for ((c, v), m) in centered.iter_mut().zip(row).zip(&self.mean) {
                *c = v - m;
            }
            for axis in &self.components {
                data.push(axis.iter().zip(&centered).map(|(a, c)| a * c).sum());
            }
        }
        FeatureMatrix::new(features.rows(), self.n_components(), data)
    }
}
