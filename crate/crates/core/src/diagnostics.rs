//! Unit-root and cointegration tests, and the rank structure of `Π`.
//!
//! Critical values come from the response surfaces of J. G. MacKinnon,
//! "Critical Values for Cointegration Tests", Queen's Economics Department
//! Working Paper 1227 (2010), Table 2: `c(n) = b∞ + b1/n + b2/n² + b3/n³`,
//! constant term, no trend. Tables for `n ∈ {50, 100, 250, 500}` follow by
//! evaluating the surface; [`critical_values`] does so for any `n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{bic, ols, Matrix, Vector};

/// Response-surface coefficients `[b∞, b1, b2, b3]` at 1%, 5% and 10%.
type Surface = [[f64; 4]; 3];

/// Unit-root test with intercept (one variable).
const ADF_CONSTANT: Surface = [
    [-3.43035, -6.5393, -16.786, -79.433],
    [-2.86154, -2.8903, -4.234, -40.040],
    [-2.56677, -1.5384, -2.809, 0.0],
];

/// Residual-based cointegration test, two variables.
const EG_TWO: Surface = [
    [-3.89644, -10.9519, -22.527, 0.0],
    [-3.33613, -6.1101, -6.823, 0.0],
    [-3.04445, -4.2412, -2.720, 0.0],
];

/// Residual-based cointegration test, three variables.
const EG_THREE: Surface = [
    [-4.29374, -14.4354, -33.195, 47.433],
    [-3.74066, -8.5631, -10.852, 27.982],
    [-3.45218, -6.2143, -3.718, 0.0],
];

/// Sample sizes of the embedded small-sample tables.
pub const TABLE_SIZES: [usize; 4] = [50, 100, 250, 500];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestKind {
    #[serde(rename = "ADF")]
    AugmentedDickeyFuller,
    #[serde(rename = "Engle-Granger")]
    EngleGranger,
}

/// Critical values at 1%, 5% and 10% for a test on `n` observations.
/// `variables` counts the series in a cointegration test (2 or 3) and is
/// ignored for the unit-root test.
pub fn critical_values(kind: TestKind, variables: usize, n: usize) -> Result<[f64; 3]> {
    let surface = match (kind, variables) {
        (TestKind::AugmentedDickeyFuller, _) => &ADF_CONSTANT,
        (TestKind::EngleGranger, 2) => &EG_TWO,
        (TestKind::EngleGranger, 3) => &EG_THREE,
        (TestKind::EngleGranger, v) => {
            return Err(Error::Parameter(format!(
                "cointegration critical values are embedded for 2 or 3 series, not {v}"
            )))
        }
    };
    let inv = 1.0 / n.max(1) as f64;
    Ok(surface.map(|b| b[0] + b[1] * inv + b[2] * inv * inv + b[3] * inv * inv * inv))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: TestKind,
    pub statistic: f64,
    pub lags: usize,
    /// Observations in the final test regression.
    pub n_obs: usize,
    /// At 1%, 5% and 10%.
    pub critical_values: [f64; 3],
    /// The unit-root (or no-cointegration) null is rejected at 5%.
    pub reject_5pct: bool,
}

/// `t`-statistic of coefficient `col` in `y ~ x`.
fn t_statistic(x: &Matrix, y: &Vector, col: usize) -> Result<(f64, f64)> {
    let fit = ols(x, y)?;
    let n = x.nrows();
    let p = x.ncols();
    let s2 = fit.rss / (n - p) as f64;
    let xtx = x.transpose() * x;
    let inv = xtx
        .cholesky()
        .ok_or(Error::SingularDesign { rank: 0, cols: p })?
        .inverse();
    let se = (s2 * inv[(col, col)]).sqrt();
    if !(se > 0.0) {
        return Err(Error::DegenerateVariance("zero residual variance in test regression".into()));
    }
    Ok((fit.coefficients[col] / se, fit.rss))
}

/// Design of `Δy_t` on `[1,] y_{t−1}, Δy_{t−1}, …, Δy_{t−p}` for
/// `t = start..n`, where `start > p`.
fn adf_design(y: &[f64], p: usize, start: usize, intercept: bool) -> (Matrix, Vector) {
    let rows = y.len() - start;
    let c0 = usize::from(intercept);
    let mut x = Matrix::zeros(rows, c0 + 1 + p);
    let mut dy = Vector::zeros(rows);
    for (r, t) in (start..y.len()).enumerate() {
        dy[r] = y[t] - y[t - 1];
        if intercept {
            x[(r, 0)] = 1.0;
        }
        x[(r, c0)] = y[t - 1];
        for i in 1..=p {
            x[(r, c0 + i)] = y[t - i] - y[t - i - 1];
        }
    }
    (x, dy)
}

/// ADF regression with lag order chosen by BIC on a common sample, then
/// refitted on all usable observations.
fn adf_core(y: &[f64], max_lag: usize, intercept: bool) -> Result<(f64, usize, usize)> {
    let start = max_lag + 1;
    let mut best: Option<(f64, usize)> = None;
    for p in 0..=max_lag {
        let (x, dy) = adf_design(y, p, start, intercept);
        let fit = ols(&x, &dy)?;
        let b = bic(dy.len(), fit.rss, x.ncols(), dy.norm_squared());
        if best.is_none_or(|(bb, _)| b < bb) {
            best = Some((b, p));
        }
    }
    let p = best.unwrap().1;
    let (x, dy) = adf_design(y, p, p + 1, intercept);
    let col = usize::from(intercept);
    let (stat, _) = t_statistic(&x, &dy, col)?;
    Ok((stat, p, dy.len()))
}

fn check_series(y: &[f64], max_lag: usize) -> Result<()> {
    if y.len() <= 10 * (max_lag + 2) {
        return Err(Error::InsufficientData(format!(
            "series of length {} is too short for {max_lag} lags (need more than {})",
            y.len(),
            10 * (max_lag + 2)
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("series contains non-finite values".into()));
    }
    let first = y[0];
    if y.iter().all(|&v| v == first) {
        return Err(Error::DegenerateVariance("constant series".into()));
    }
    Ok(())
}

/// Augmented Dickey-Fuller test with intercept. The null is a unit root.
pub fn adf_test(series: &[f64], max_lag: usize) -> Result<TestResult> {
    check_series(series, max_lag)?;
    let (statistic, lags, n_obs) = adf_core(series, max_lag, true)?;
    let cv = critical_values(TestKind::AugmentedDickeyFuller, 1, n_obs)?;
    Ok(TestResult {
        test: TestKind::AugmentedDickeyFuller,
        statistic,
        lags,
        n_obs,
        critical_values: cv,
        reject_5pct: statistic < cv[1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngleGrangerResult {
    pub result: TestResult,
    /// `(1, −b₁, …, −b_k)` such that `y − Σ b_i x_i − c` is the residual.
    pub vector: Vec<f64>,
    pub intercept: f64,
}

/// Default lag cap `⌊12 (n/100)^{1/4}⌋`, limited so the series stays long
/// enough for the test.
pub fn default_max_lag(n: usize) -> usize {
    let schwert = (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize;
    schwert.min((n / 10).saturating_sub(3))
}

/// Engle-Granger test: OLS of `y` on `x` with intercept, then an ADF
/// regression without intercept on the residuals. The null is no
/// cointegration.
pub fn engle_granger_test(y: &[f64], x: &[Vec<f64>]) -> Result<EngleGrangerResult> {
    let n = y.len();
    if x.is_empty() || x.iter().any(|s| s.len() != n) {
        return Err(Error::Dimension("all series must have the same length".into()));
    }
    if n <= 50 {
        return Err(Error::InsufficientData(format!("need more than 50 observations, got {n}")));
    }
    let max_lag = default_max_lag(n);
    check_series(y, max_lag)?;
    for s in x {
        check_series(s, max_lag)?;
    }
    let k = x.len();
    let mut design = Matrix::zeros(n, k + 1);
    for t in 0..n {
        design[(t, 0)] = 1.0;
        for (i, s) in x.iter().enumerate() {
            design[(t, i + 1)] = s[t];
        }
    }
    let fit = ols(&design, &Vector::from_column_slice(y))?;
    let resid: Vec<f64> = fit.residuals.iter().copied().collect();
    let scale = resid.iter().map(|r| r.abs()).fold(0.0, f64::max);
    let y_scale = y.iter().map(|r| r.abs()).fold(0.0, f64::max);
    if scale <= 1e-12 * y_scale {
        return Err(Error::DegenerateVariance("exact linear relation, residuals vanish".into()));
    }
    let (statistic, lags, n_obs) = adf_core(&resid, max_lag, false)?;
    let cv = critical_values(TestKind::EngleGranger, k + 1, n_obs)?;
    let mut vector = vec![1.0];
    vector.extend(fit.coefficients.iter().skip(1).map(|b| -b));
    Ok(EngleGrangerResult {
        result: TestResult {
            test: TestKind::EngleGranger,
            statistic,
            lags,
            n_obs,
            critical_values: cv,
            reject_5pct: statistic < cv[1],
        },
        vector,
        intercept: fit.coefficients[0],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RankCase {
    /// Every component is stationary.
    Full,
    /// No long-term relation; the components are independent random walks.
    Zero,
    /// `r` cointegrating relations, `Π = αβᵀ`.
    Partial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiRank {
    pub rank: usize,
    pub case: RankCase,
    pub singular_values: Vec<f64>,
    /// `n × r`, present for the partial case.
    pub alpha: Option<Matrix>,
    pub beta: Option<Matrix>,
}

/// Relative singular-value threshold matching entries quoted to three
/// decimals on a matrix of norm ~0.25.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-2;

/// Numerical rank of `Π`: singular values above `tol · σ_max`. For the
/// partial case `α = U_r S_r` and `β = V_r`, so `‖Π − αβᵀ‖₂ = σ_{r+1}`.
pub fn classify_pi_rank(pi: &Matrix, tol: f64) -> Result<PiRank> {
    if pi.nrows() != pi.ncols() || pi.nrows() == 0 {
        return Err(Error::Dimension("Pi must be square".into()));
    }
    let n = pi.nrows();
    // nalgebra's SVD can return factors that do not recompose an exactly
    // rank-deficient input; faer's is used instead.
    let svd = faer::Mat::<f64>::from_fn(n, n, |i, j| pi[(i, j)])
        .svd()
        .map_err(|e| Error::Numerical(format!("SVD of Pi did not converge: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S(), svd.V());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let sv: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    let smax = sv[0];
    let rank = if smax == 0.0 {
        0
    } else {
        sv.iter().filter(|&&s| s > tol * smax).count()
    };
    let case = match rank {
        0 => RankCase::Zero,
        r if r == n => RankCase::Full,
        _ => RankCase::Partial,
    };
    let (alpha, beta) = if case == RankCase::Partial {
        let mut a = Matrix::zeros(n, rank);
        let mut b = Matrix::zeros(n, rank);
        for (c, &i) in order.iter().take(rank).enumerate() {
            // Sign convention: the largest-magnitude entry of each β column
            // is positive.
            let col = Vector::from_fn(n, |r, _| v[(r, i)]);
            let pivot = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            b.set_column(c, &(col * sign));
            a.set_column(c, &Vector::from_fn(n, |r, _| u[(r, i)] * sv[c] * sign));
        }
        (Some(a), Some(b))
    } else {
        (None, None)
    };
    Ok(PiRank {
        rank,
        case,
        singular_values: sv,
        alpha,
        beta,
    })
}
