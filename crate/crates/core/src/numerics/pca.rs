use nalgebra::SymmetricEigen;

use super::{ensure_finite_matrix, Matrix, Vector};
use crate::error::{Error, Result};

/// Principal components of the sample covariance of a data matrix whose rows
/// are observations.
#[derive(Debug, Clone)]
pub struct Pca {
    /// Descending eigenvalues of the sample covariance (divisor `n - 1`).
    pub eigenvalues: Vector,
    /// Orthonormal loadings, one column per component.
    pub loadings: Matrix,
    /// Centered data projected onto the loadings.
    pub scores: Matrix,
    pub mean: Vector,
}

impl Pca {
    /// Share of total variance carried by each component.
    pub fn explained_variance(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        if total <= 0.0 {
            return vec![0.0; self.eigenvalues.len()];
        }
        self.eigenvalues.iter().map(|v| v.max(0.0) / total).collect()
    }
}

pub fn pca(data: &Matrix) -> Result<Pca> {
    let (n, p) = data.shape();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "PCA needs at least 2 observations, got {n}"
        )));
    }
    if p < 1 {
        return Err(Error::Dimension("PCA needs at least one column".into()));
    }
    ensure_finite_matrix(data, "PCA input")?;

    let mean = Vector::from_iterator(p, data.column_iter().map(|c| c.mean()));
    let mut centered = data.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let cov = (&cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let eigenvalues = Vector::from_iterator(p, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut loadings = Matrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        // Deterministic sign: positive sum, or positive largest entry when the
        // sum vanishes.
        let sum: f64 = col.iter().sum();
        let flip = if sum.abs() > 1e-12 {
            sum < 0.0
        } else {
            let imax = col.iamax();
            col[imax] < 0.0
        };
        if flip {
            col.neg_mut();
        }
        loadings.set_column(dst, &col);
    }
    let scores = &centered * &loadings;
    Ok(Pca {
        eigenvalues,
        loadings,
        scores,
        mean,
    })
}
