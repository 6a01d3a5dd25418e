//! Column standardization and principal component analysis.

use serde::Serialize;

use super::linalg::{symmetric_eigen, Matrix};
use super::EvalError;

/// Columns whose population standard deviation falls below this are dropped.
pub const MIN_STD: f64 = 1e-12;

/// Per-column z-score fitted on one matrix and replayable on others.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standardizer {
    /// Indices of the input columns that survive, in order.
    pub kept: Vec<usize>,
    /// Indices of the constant input columns that were dropped.
    pub dropped: Vec<usize>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Result<Self, EvalError> {
        let n = x.rows();
        if n == 0 {
            return Err(EvalError::Empty);
        }
        let mut s = Standardizer { kept: Vec::new(), dropped: Vec::new(), means: Vec::new(), stds: Vec::new() };
        for j in 0..x.cols() {
            let col = x.column(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            if std < MIN_STD {
                s.dropped.push(j);
            } else {
                s.kept.push(j);
                s.means.push(mean);
                s.stds.push(std);
            }
        }
        if s.kept.is_empty() {
            return Err(EvalError::AllConstant);
        }
        Ok(s)
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut out = x.select_cols(&self.kept);
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.means[j]) / self.stds[j];
            }
        }
        out
    }
}

/// Z-scores every column with the population standard deviation, dropping
/// constant columns.
pub fn standardize(x: &Matrix) -> Result<(Matrix, Standardizer), EvalError> {
    let s = Standardizer::fit(x)?;
    Ok((s.transform(x), s))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pca {
    /// `k × d`; each row is a unit eigenvector of the covariance.
    #[serde(skip)]
    pub components: Matrix,
    /// Covariance eigenvalues of the retained components, descending.
    pub explained_variance: Vec<f64>,
    /// Sum of all covariance eigenvalues (the trace).
    pub total_variance: f64,
}

impl Pca {
    /// Fits on centered (standardized) data. The covariance uses divisor `n`.
    pub fn fit(x: &Matrix, k: usize) -> Result<Self, EvalError> {
        let (n, d) = (x.rows(), x.cols());
        let max = d.min(n.saturating_sub(1));
        if k == 0 || k > max {
            return Err(EvalError::PcaTooLarge { k, max });
        }
        let mut cov = x.transpose().matmul(x);
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] /= n as f64;
            }
        }
        // Symmetrize away rounding noise before the eigensolver.
        for i in 0..d {
            for j in i + 1..d {
                let m = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = m;
                cov[(j, i)] = m;
            }
        }
        let total_variance = (0..d).map(|i| cov[(i, i)]).sum();
        let (values, vectors) = symmetric_eigen(&cov);
        let mut components = Matrix::zeros(k, d);
        for c in 0..k {
            let mut v = vectors.column(c);
            let lead = v.iter().copied().enumerate().fold((0, 0.0f64), |best, (i, x)| if x.abs() > best.1.abs() { (i, x) } else { best });
            if v[lead.0] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            components.row_mut(c).copy_from_slice(&v);
        }
        let explained_variance = values[..k].iter().map(|v| v.max(0.0)).collect();
        Ok(Pca { components, explained_variance, total_variance })
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        x.matmul(&self.components.transpose())
    }
}

/// Projects standardized data on its top `k` principal components.
pub fn pca_fit_transform(x: &Matrix, k: usize) -> Result<(Matrix, Pca), EvalError> {
    let pca = Pca::fit(x, k)?;
    Ok((pca.transform(x), pca))
}
