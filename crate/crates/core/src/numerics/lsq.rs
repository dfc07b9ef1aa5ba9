//! Ordinary least squares by Householder QR, and exhaustive best-subset
//! selection scored by BIC.

use nalgebra::QR;

use super::{ensure_finite_matrix, ensure_finite_slice, Matrix, Vector};
use crate::error::{Error, Result};

/// Relative threshold on `|R_ii|` below which a design column is treated as
/// linearly dependent.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: Vector,
    pub residuals: Vector,
    pub rss: f64,
}

pub fn ols(x: &Matrix, y: &Vector) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if n != y.len() {
        return Err(Error::Dimension(format!(
            "design has {n} rows but response has {} entries",
            y.len()
        )));
    }
    if n <= p {
        return Err(Error::InsufficientData(format!(
            "least squares needs more rows than columns ({n} <= {p})"
        )));
    }
    ensure_finite_matrix(x, "design matrix")?;
    ensure_finite_slice(y.as_slice(), "response")?;
    if p == 0 {
        let rss = y.norm_squared();
        return Ok(OlsFit {
            coefficients: Vector::zeros(0),
            residuals: y.clone(),
            rss,
        });
    }

    let qr = QR::new(x.clone());
    let r = qr.r();
    let scale = x
        .column_iter()
        .map(|c| c.norm())
        .fold(0.0f64, f64::max);
    let rank = (0..p)
        .filter(|&i| r[(i, i)].abs() > RANK_TOL * scale)
        .count();
    if rank < p {
        return Err(Error::SingularDesign { rank, cols: p });
    }
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let head = qty.rows(0, p).into_owned();
    let coefficients = r
        .solve_upper_triangular(&head)
        .ok_or(Error::SingularDesign { rank, cols: p })?;
    let residuals = y - x * &coefficients;
    let rss = residuals.norm_squared();
    Ok(OlsFit {
        coefficients,
        residuals,
        rss,
    })
}

/// `n ln(RSS/n) + k ln(n)`.
///
/// RSS is floored at `(1e-10 ‖y‖)²` so that models fitting the response to
/// rounding error all score the same fit term and the penalty decides.
pub fn bic(n: usize, rss: f64, k: usize, y_norm_sq: f64) -> f64 {
    let floor = (1e-20 * y_norm_sq).max(f64::MIN_POSITIVE);
    let n_f = n as f64;
    n_f * (rss.max(floor) / n_f).ln() + k as f64 * n_f.ln()
}

#[derive(Debug, Clone)]
pub struct BicSelection {
    /// Selected column indices, ascending.
    pub support: Vec<usize>,
    /// Coefficients aligned with `support`.
    pub coefficients: Vec<f64>,
    pub bic: f64,
    pub rss: f64,
}

impl BicSelection {
    /// Coefficients scattered back to the full column space; zero off the support.
    pub fn dense_coefficients(&self, p: usize) -> Vec<f64> {
        let mut out = vec![0.0; p];
        for (&j, &c) in self.support.iter().zip(&self.coefficients) {
            out[j] = c;
        }
        out
    }
}

/// Maximum number of candidate columns for the exhaustive search.
pub const MAX_SUBSET_COLUMNS: usize = 15;

pub fn bic_subset_select(x: &Matrix, y: &Vector) -> Result<BicSelection> {
    bic_subset_select_max(x, y, x.ncols())
}

/// Exhaustive search over every column subset of size at most `max_size`.
/// Ties go to the smaller subset, then the lexicographically first one.
pub fn bic_subset_select_max(x: &Matrix, y: &Vector, max_size: usize) -> Result<BicSelection> {
    let (n, p) = x.shape();
    if p > MAX_SUBSET_COLUMNS {
        return Err(Error::Parameter(format!(
            "exhaustive subset search limited to {MAX_SUBSET_COLUMNS} columns, got {p}"
        )));
    }
    if n <= p {
        return Err(Error::InsufficientData(format!(
            "subset selection needs more rows than columns ({n} <= {p})"
        )));
    }
    ensure_finite_matrix(x, "design matrix")?;
    ensure_finite_slice(y.as_slice(), "response")?;
    let y_norm_sq = y.norm_squared();
    let max_size = max_size.min(p);

    let mut best: Option<BicSelection> = None;
    for k in 0..=max_size {
        for support in Combinations::new(p, k) {
            let sub = x.select_columns(support.iter());
            let fit = match ols(&sub, y) {
                Ok(f) => f,
                Err(Error::SingularDesign { .. }) => continue,
                Err(e) => return Err(e),
            };
            let score = bic(n, fit.rss, k, y_norm_sq);
            let better = match &best {
                None => true,
                Some(b) => score < b.bic - 1e-9 * b.bic.abs().max(1.0),
            };
            if better {
                best = Some(BicSelection {
                    support: support.clone(),
                    coefficients: fit.coefficients.iter().copied().collect(),
                    bic: score,
                    rss: fit.rss,
                });
            }
        }
    }
    best.ok_or(Error::SingularDesign { rank: 0, cols: p })
}

/// k-subsets of `0..n` in lexicographic order.
struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        let current = if k <= n { Some((0..k).collect()) } else { None };
        Self { n, current }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_design(n: usize, p: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn combinations_enumerate_lexicographically() {
        let all: Vec<_> = Combinations::new(4, 2).collect();
        assert_eq!(
            all,
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        assert_eq!(Combinations::new(3, 0).count(), 1);
        assert_eq!(Combinations::new(5, 5).count(), 1);
    }

    #[test]
    fn constant_design() {
        let x = Matrix::from_element(3, 1, 1.0);
        let y = Vector::from_vec(vec![2.0, 2.0, 2.0]);
        let fit = ols(&x, &y).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-14);
        assert!(fit.rss < 1e-28);
    }

    #[test]
    fn exact_linear_data() {
        let x = random_design(20, 2, 1);
        let y = x.column(0) * 3.0 - x.column(1);
        let fit = ols(&x, &y).unwrap();
        assert!((fit.coefficients[0] - 3.0).abs() < 1e-12);
        assert!((fit.coefficients[1] + 1.0).abs() < 1e-12);
        assert!(fit.rss < 1e-20);
    }

    #[test]
    fn rank_deficient_design() {
        let mut x = random_design(10, 3, 2);
        let c = x.column(0) * 2.0;
        x.set_column(2, &c);
        let y = Vector::from_element(10, 1.0);
        assert!(matches!(ols(&x, &y), Err(Error::SingularDesign { .. })));
    }

    #[test]
    fn bic_picks_single_column() {
        let x = random_design(60, 4, 5);
        let y = x.column(1) * 1.5;
        let sel = bic_subset_select(&x, &y).unwrap();
        assert_eq!(sel.support, vec![1]);
        assert!((sel.coefficients[0] - 1.5).abs() < 1e-10);
    }

    #[test]
    fn bic_picks_two_columns() {
        let x = random_design(80, 5, 6);
        let y = x.column(1) * 2.0 + x.column(3) * 3.0;
        let sel = bic_subset_select(&x, &y).unwrap();
        assert_eq!(sel.support, vec![1, 3]);
        assert!((sel.coefficients[0] - 2.0).abs() < 1e-10);
        assert!((sel.coefficients[1] - 3.0).abs() < 1e-10);
        let dense = sel.dense_coefficients(5);
        assert_eq!([dense[0], dense[2], dense[4]], [0.0; 3]);
        assert_eq!(dense[1], sel.coefficients[0]);
    }

    #[test]
    fn bic_rejects_pure_noise_most_of_the_time() {
        let trials = 100;
        let mut empty = 0;
        for seed in 0..trials {
            let x = random_design(500, 4, 1000 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
            let y = Vector::from_fn(500, |_, _| StandardNormal.sample(&mut rng));
            if bic_subset_select(&x, &y).unwrap().support.is_empty() {
                empty += 1;
            }
        }
        assert!(empty as f64 / trials as f64 > 0.9, "empty support in {empty}/{trials}");
    }

    #[test]
    fn max_size_limits_search() {
        let x = random_design(80, 4, 7);
        let y = x.column(0) + x.column(2) + x.column(3);
        let sel = bic_subset_select_max(&x, &y, 2).unwrap();
        assert_eq!(sel.support.len(), 2);
    }

    proptest! {
        #[test]
        fn residuals_orthogonal_to_columns(seed in 0u64..1000, n in 8usize..60) {
            let x = random_design(n, 3, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 77);
            let y = Vector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let fit = ols(&x, &y).unwrap();
            for col in x.column_iter() {
                let scale = col.norm() * fit.residuals.norm().max(1e-300);
                prop_assert!((col.dot(&fit.residuals)).abs() <= 1e-9 * scale.max(1.0));
            }
        }

        #[test]
        fn full_support_recovered(seed in 0u64..500) {
            let x = random_design(40, 3, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 9);
            let beta: Vec<f64> = (0..3).map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z.signum() * (0.5 + z.abs())
            }).collect();
            let y = &x * Vector::from_vec(beta);
            let sel = bic_subset_select(&x, &y).unwrap();
            prop_assert_eq!(sel.support, vec![0, 1, 2]);
        }
    }
}
