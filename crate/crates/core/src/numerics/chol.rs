use nalgebra::SymmetricEigen;

use super::{ensure_finite_matrix, ensure_square, Matrix};
use crate::error::{Error, Result};

/// Eigenvalues in `[-PSD_TOLERANCE, 0)` are clipped to zero; anything more
/// negative is rejected.
pub const PSD_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct CholPsd {
    /// Lower-triangular with non-negative diagonal.
    pub factor: Matrix,
    /// Frobenius norm of the eigenvalue clipping applied before factoring
    /// (zero when the input was already PSD).
    pub repair: f64,
}

/// Lower-triangular `L` with `L Lᵀ = S` for a symmetric positive
/// semi-definite `S`.
pub fn chol_psd(s: &Matrix) -> Result<CholPsd> {
    ensure_square(s, "covariance")?;
    ensure_finite_matrix(s, "covariance")?;
    let n = s.nrows();
    let scale = s.amax().max(f64::MIN_POSITIVE);
    let asym = (s - s.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::Parameter(format!(
            "covariance is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let sym = (s + s.transpose()) * 0.5;

    let eig = SymmetricEigen::new(sym.clone());
    let min_eig = eig.eigenvalues.min();
    if min_eig < -PSD_TOLERANCE {
        return Err(Error::NotPsd {
            min_eigenvalue: min_eig,
        });
    }
    let (work, repair) = if min_eig < 0.0 {
        let clipped = eig.eigenvalues.map(|v| v.max(0.0));
        let rebuilt = &eig.eigenvectors
            * Matrix::from_diagonal(&clipped)
            * eig.eigenvectors.transpose();
        let rebuilt = (&rebuilt + rebuilt.transpose()) * 0.5;
        let repair = (&rebuilt - &sym).norm();
        (rebuilt, repair)
    } else {
        (sym, 0.0)
    };

    // Outer-product Cholesky that tolerates zero pivots.
    let pivot_floor = 1e-14 * scale;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = work[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= pivot_floor {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut v = work[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(CholPsd { factor: l, repair })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn identity() {
        let c = chol_psd(&Matrix::identity(4, 4)).unwrap();
        assert_eq!(c.factor, Matrix::identity(4, 4));
        assert_eq!(c.repair, 0.0);
    }

    #[test]
    fn hand_checked_two_by_two() {
        let s = Matrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 2.0]);
        let c = chol_psd(&s).unwrap();
        let want = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0]);
        assert!((c.factor - want).amax() < 1e-15);
    }

    #[test]
    fn reference_covariance_reproduced() {
        let s = presets::reference_sigma_sigma_t();
        let c = chol_psd(&s).unwrap();
        let rebuilt = &c.factor * c.factor.transpose();
        assert!((rebuilt - &s).amax() < 1e-12);
        assert_eq!(c.repair, 0.0);
        for i in 0..6 {
            assert!(c.factor[(i, i)] >= 0.0);
            for j in i + 1..6 {
                assert_eq!(c.factor[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn singular_psd() {
        let v = [1.0, 2.0, -1.0];
        let s = Matrix::from_fn(3, 3, |i, j| v[i] * v[j]);
        let c = chol_psd(&s).unwrap();
        assert!((&c.factor * c.factor.transpose() - s).amax() < 1e-12);
    }

    #[test]
    fn slightly_negative_is_repaired() {
        let s = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-9]);
        let c = chol_psd(&s).unwrap();
        assert!(c.repair > 0.0 && c.repair < 1e-8);
        assert!(c.factor[(1, 1)] >= 0.0);
    }

    #[test]
    fn indefinite_rejected() {
        let s = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(chol_psd(&s), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn asymmetric_rejected() {
        let s = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(chol_psd(&s).is_err());
    }
}
