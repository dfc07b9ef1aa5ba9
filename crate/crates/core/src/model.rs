//! Model parameters and the deterministic pieces of the two-energy forward
//! model: the level/slope/curvature volatility basis, the stacked
//! per-energy volatility rows, the market price of risk and the
//! exponential-form forward price.

use std::fmt;
use std::str::FromStr;

use nalgebra::RowDVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::ForwardCurve;
use crate::numerics::{chol_psd, ensure_finite_matrix, ensure_square, Matrix, TimeGrid, Vector};

/// Current version of the parameter document schema.
pub const PARAMS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Energy {
    #[serde(rename = "g")]
    Gas,
    #[serde(rename = "c")]
    Crude,
}

impl Energy {
    pub const ALL: [Energy; 2] = [Energy::Gas, Energy::Crude];

    pub fn tag(self) -> &'static str {
        match self {
            Energy::Gas => "g",
            Energy::Crude => "c",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Energy::Gas => "gas",
            Energy::Crude => "crude",
        }
    }
}

impl fmt::Display for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Energy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "g" | "gas" => Ok(Energy::Gas),
            "c" | "crude" | "oil" => Ok(Energy::Crude),
            other => Err(Error::Parameter(format!("unknown energy '{other}'"))),
        }
    }
}

/// Measure under which motions are simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasureTag {
    /// Historical measure: cointegrating drift `ΠX` and the centering drift apply.
    #[serde(rename = "P")]
    Historical,
    /// Risk-neutral measure: motions are driftless Brownian motions.
    #[serde(rename = "Q")]
    RiskNeutral,
}

impl FromStr for MeasureTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "P" | "p" | "historical" => Ok(MeasureTag::Historical),
            "Q" | "q" | "risk-neutral" | "risk_neutral" => Ok(MeasureTag::RiskNeutral),
            other => Err(Error::Parameter(format!("unknown measure '{other}'"))),
        }
    }
}

/// Volatility basis parameters of one energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyVol {
    #[serde(rename = "N")]
    pub factors: usize,
    pub tau1: f64,
    pub tau2: f64,
}

impl EnergyVol {
    pub const fn new(factors: usize, tau1: f64, tau2: f64) -> Self {
        Self {
            factors,
            tau1,
            tau2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.factors) {
            return Err(Error::Parameter(format!(
                "factor count must be 1, 2 or 3, got {}",
                self.factors
            )));
        }
        if !(self.tau1 > 0.0 && self.tau1.is_finite() && self.tau2 > 0.0 && self.tau2.is_finite())
        {
            return Err(Error::Parameter(format!(
                "time constants must be positive, got tau1={}, tau2={}",
                self.tau1, self.tau2
            )));
        }
        Ok(())
    }

    /// Basis `(1, e^{-x/τ₁}, (x/τ₂) e^{-x/τ₂})` at tenor `x`, all three
    /// components regardless of the factor count.
    #[inline]
    pub(crate) fn basis3(&self, tenor: f64) -> [f64; 3] {
        let r2 = tenor / self.tau2;
        [1.0, (-tenor / self.tau1).exp(), r2 * (-r2).exp()]
    }

    /// `∫_a^b σ_i(T - s) ds` for each basis component, `a ≤ b ≤ T`.
    pub(crate) fn basis_integral(&self, maturity: f64, a: f64, b: f64) -> [f64; 3] {
        let xa = maturity - a;
        let xb = maturity - b;
        let t1 = self.tau1;
        let t2 = self.tau2;
        [
            b - a,
            t1 * ((-xb / t1).exp() - (-xa / t1).exp()),
            (xb + t2) * (-xb / t2).exp() - (xa + t2) * (-xa / t2).exp(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolParams {
    pub gas: EnergyVol,
    pub crude: EnergyVol,
}

impl VolParams {
    pub fn get(&self, e: Energy) -> &EnergyVol {
        match e {
            Energy::Gas => &self.gas,
            Energy::Crude => &self.crude,
        }
    }

    pub fn get_mut(&mut self, e: Energy) -> &mut EnergyVol {
        match e {
            Energy::Gas => &mut self.gas,
            Energy::Crude => &mut self.crude,
        }
    }

    /// Total number of motions `N^g + N^c`.
    pub fn n_factors(&self) -> usize {
        self.gas.factors + self.crude.factors
    }

    /// Index of the first motion driving energy `e`.
    pub fn offset(&self, e: Energy) -> usize {
        match e {
            Energy::Gas => 0,
            Energy::Crude => self.gas.factors,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gas.validate()?;
        self.crude.validate()
    }
}

fn check_tenor(tenor: f64) -> Result<()> {
    if tenor >= 0.0 && tenor.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "tenor must be finite and non-negative, got {tenor}"
        )))
    }
}

/// Normalized volatility functions of energy `e` at tenor `T - t`,
/// truncated to the energy's factor count.
pub fn vol_basis(e: Energy, tenor: f64, vol: &VolParams) -> Result<Vec<f64>> {
    check_tenor(tenor)?;
    let ev = vol.get(e);
    ev.validate()?;
    Ok(ev.basis3(tenor)[..ev.factors].to_vec())
}

/// Volatility row of energy `e` in the full motion space: gas loads on the
/// first `N^g` motions, crude on the last `N^c`.
pub fn stacked_vol(e: Energy, tenor: f64, vol: &VolParams) -> Result<RowDVector<f64>> {
    let basis = vol_basis(e, tenor, vol)?;
    let mut row = RowDVector::zeros(vol.n_factors());
    let off = vol.offset(e);
    for (i, b) in basis.into_iter().enumerate() {
        row[off + i] = b;
    }
    Ok(row)
}

/// Fills `out` (length `N`) with the stacked volatility row; no validation.
#[inline]
pub(crate) fn stacked_vol_into(e: Energy, tenor: f64, vol: &VolParams, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let ev = vol.get(e);
    let off = vol.offset(e);
    let b = ev.basis3(tenor);
    out[off..off + ev.factors].copy_from_slice(&b[..ev.factors]);
}

/// Piecewise-constant centering drift `θ′` on a knot grid: `values[k]`
/// applies on `[knots[k], knots[k+1])` and the last value is held beyond
/// the final knot. An empty function is identically zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaPrime {
    pub grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ThetaPrime {
    pub fn zero() -> Self {
        Self {
            grid: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn new(grid: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let tp = Self { grid, values };
        tp.validate(None)?;
        Ok(tp)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|&x| x == 0.0))
    }

    fn validate(&self, dim: Option<usize>) -> Result<()> {
        if self.values.is_empty() {
            return if self.grid.len() <= 1 {
                Ok(())
            } else {
                Err(Error::Parameter("theta_prime grid without values".into()))
            };
        }
        if self.grid.len() != self.values.len() + 1 {
            return Err(Error::Dimension(format!(
                "theta_prime has {} knots for {} pieces",
                self.grid.len(),
                self.values.len()
            )));
        }
        TimeGrid::new(self.grid.clone())?;
        if self.grid[0] != 0.0 {
            return Err(Error::Parameter("theta_prime grid must start at 0".into()));
        }
        let d = dim.unwrap_or(self.values[0].len());
        for v in &self.values {
            if v.len() != d {
                return Err(Error::Dimension(format!(
                    "theta_prime value has length {}, expected {d}",
                    v.len()
                )));
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::Parameter("theta_prime has non-finite values".into()));
            }
        }
        Ok(())
    }

    /// Pieces as `(start, end, value)`; the last piece extends to infinity.
    fn pieces(&self) -> impl Iterator<Item = (f64, f64, &[f64])> + '_ {
        let k = self.values.len();
        self.values.iter().enumerate().map(move |(i, v)| {
            let end = if i + 1 == k {
                f64::INFINITY
            } else {
                self.grid[i + 1]
            };
            (self.grid[i], end, v.as_slice())
        })
    }

    /// `θ′_t` written into `out`.
    pub fn value_into(&self, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if self.values.is_empty() || t < self.grid[0] {
            return;
        }
        let idx = match self.grid.binary_search_by(|g| g.total_cmp(&t)) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
        .min(self.values.len() - 1);
        out.copy_from_slice(&self.values[idx]);
    }

    pub fn value_at(&self, t: f64, dim: usize) -> Vector {
        let mut out = vec![0.0; dim];
        self.value_into(t, &mut out);
        Vector::from_vec(out)
    }

    /// `θ_t = ∫_0^t θ′_s ds`.
    pub fn theta_at(&self, t: f64, dim: usize) -> Vector {
        let mut acc = Vector::zeros(dim);
        for (a, b, v) in self.pieces() {
            if a >= t {
                break;
            }
            let len = b.min(t) - a;
            for i in 0..dim {
                acc[i] += v[i] * len;
            }
        }
        acc
    }

    /// `∫_0^t σ^e(T - s) θ′_s ds` in closed form, for `t ≤ T`.
    pub fn vol_integral(&self, e: Energy, t: f64, maturity: f64, vol: &VolParams) -> f64 {
        let ev = vol.get(e);
        let off = vol.offset(e);
        let mut acc = 0.0;
        for (a, b, v) in self.pieces() {
            if a >= t {
                break;
            }
            let ints = ev.basis_integral(maturity, a, b.min(t));
            for i in 0..ev.factors {
                acc += ints[i] * v[off + i];
            }
        }
        acc
    }
}

impl Default for ThetaPrime {
    fn default() -> Self {
        Self::zero()
    }
}

/// All estimated quantities of the model.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub vol: VolParams,
    /// Cointegration matrix `Π`.
    pub pi: Matrix,
    /// Lower-triangular factor `Σ` of `sigma_sigma_t`.
    pub sigma: Matrix,
    /// Covariance `ΣΣ*` of the motion increments per unit time.
    pub sigma_sigma_t: Matrix,
    pub theta_prime: ThetaPrime,
    /// Magnitude of the eigenvalue repair applied when factoring `ΣΣ*`.
    pub covariance_repair: f64,
}

impl ModelParams {
    /// Builds parameters with `θ′ ≡ 0`, factoring `ΣΣ*` into a
    /// lower-triangular `Σ`. A degenerate (singular) `Σ` is accepted here;
    /// operations that need `Σ⁻¹` check for it.
    pub fn new(vol: VolParams, pi: Matrix, sigma_sigma_t: Matrix) -> Result<Self> {
        vol.validate()?;
        let n = vol.n_factors();
        ensure_square(&pi, "Pi")?;
        ensure_finite_matrix(&pi, "Pi")?;
        if pi.nrows() != n || sigma_sigma_t.nrows() != n || sigma_sigma_t.ncols() != n {
            return Err(Error::Dimension(format!(
                "Pi is {}x{}, SigmaSigmaT is {}x{}, but the volatility basis has {n} factors",
                pi.nrows(),
                pi.ncols(),
                sigma_sigma_t.nrows(),
                sigma_sigma_t.ncols()
            )));
        }
        let chol = chol_psd(&sigma_sigma_t)?;
        Ok(Self {
            vol,
            pi,
            sigma: chol.factor,
            sigma_sigma_t,
            theta_prime: ThetaPrime::zero(),
            covariance_repair: chol.repair,
        })
    }

    pub fn with_theta_prime(mut self, theta_prime: ThetaPrime) -> Result<Self> {
        theta_prime.validate(Some(self.n_factors()))?;
        self.theta_prime = theta_prime;
        Ok(self)
    }

    pub fn n_factors(&self) -> usize {
        self.vol.n_factors()
    }

    /// Smallest diagonal entry of `Σ` is at most `1e-12`.
    pub fn is_degenerate(&self) -> bool {
        self.sigma.diagonal().iter().any(|d| *d <= 1e-12)
    }

    /// `η_t = θ′_t − Π θ_t`.
    pub fn eta(&self, t: f64) -> Vector {
        let n = self.n_factors();
        self.theta_prime.value_at(t, n) - &self.pi * self.theta_prime.theta_at(t, n)
    }

    pub fn to_document(&self) -> ParamsDocument {
        let rows = |m: &Matrix| -> Vec<Vec<f64>> {
            m.row_iter().map(|r| r.iter().copied().collect()).collect()
        };
        ParamsDocument {
            version: PARAMS_SCHEMA_VERSION,
            vol: self.vol,
            pi: rows(&self.pi),
            sigma_sigma_t: rows(&self.sigma_sigma_t),
            theta_prime: self.theta_prime.clone(),
        }
    }

    pub fn from_document(doc: ParamsDocument) -> Result<Self> {
        if doc.version != PARAMS_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported parameter schema version {} (expected {PARAMS_SCHEMA_VERSION})",
                doc.version
            )));
        }
        let pi = matrix_from_rows(&doc.pi, "Pi")?;
        let sst = matrix_from_rows(&doc.sigma_sigma_t, "SigmaSigmaT")?;
        Self::new(doc.vol, pi, sst)?.with_theta_prime(doc.theta_prime)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ParamsDocument = serde_json::from_str(s)?;
        Self::from_document(doc)
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Format(format!("{what} must be a non-empty square array of rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Matrix::from_row_slice(n, n, &flat))
}

/// Serialized form of [`ModelParams`]. Matrices are arrays of rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsDocument {
    pub version: u32,
    pub vol: VolParams,
    #[serde(rename = "Pi")]
    pub pi: Vec<Vec<f64>>,
    #[serde(rename = "SigmaSigmaT")]
    pub sigma_sigma_t: Vec<Vec<f64>>,
    pub theta_prime: ThetaPrime,
}

/// Market price of risk `λ = Σ⁻¹(ΠX + η_t)`, by triangular solve.
pub fn market_price_of_risk(x: &Vector, t: f64, params: &ModelParams) -> Result<Vector> {
    let n = params.n_factors();
    if x.len() != n {
        return Err(Error::Dimension(format!(
            "motion has length {}, expected {n}",
            x.len()
        )));
    }
    if params.is_degenerate() {
        return Err(Error::Singular("Sigma is degenerate".into()));
    }
    let rhs = &params.pi * x + params.eta(t);
    params
        .sigma
        .solve_lower_triangular(&rhs)
        .ok_or_else(|| Error::Singular("Sigma is degenerate".into()))
}

/// Increments of the centered motion `X̃` on a time grid starting at 0.
#[derive(Debug, Clone)]
pub struct MotionIncrements {
    pub grid: TimeGrid,
    /// `increments[k] = X̃_{t_{k+1}} − X̃_{t_k}`.
    pub increments: Vec<Vector>,
}

impl MotionIncrements {
    pub fn new(grid: TimeGrid, increments: Vec<Vector>) -> Result<Self> {
        if increments.len() != grid.n_steps() {
            return Err(Error::Dimension(format!(
                "{} increments for {} grid steps",
                increments.len(),
                grid.n_steps()
            )));
        }
        Ok(Self { grid, increments })
    }
}

/// Forward price `F^e(t, T)` in exponential form:
/// `F(0,T) · exp(∫σθ′) · exp(Σ_k σ(T − t_k) ΔX̃_k − ½ Σ_k |σ(T − t_k) Σ|² Δt_k)`
/// over the grid steps inside `[0, t]`.
pub fn forward_price(
    e: Energy,
    t: f64,
    maturity: f64,
    curve: &ForwardCurve,
    motion: &MotionIncrements,
    params: &ModelParams,
) -> Result<f64> {
    if !(t >= 0.0) || t > maturity {
        return Err(Error::Parameter(format!(
            "need 0 <= t <= T, got t={t}, T={maturity}"
        )));
    }
    if curve.energy != e {
        return Err(Error::Parameter(format!(
            "curve is for energy {}, requested {e}",
            curve.energy
        )));
    }
    let f0 = curve.price_at(maturity);
    if t == 0.0 {
        return Ok(f0);
    }
    let times = motion.grid.times();
    if times[0] != 0.0 {
        return Err(Error::Parameter("motion grid must start at 0".into()));
    }
    let k_end = motion.grid.nearest_index(t);
    if (times[k_end] - t).abs() > 1e-9 {
        return Err(Error::Parameter(format!("t={t} is not a point of the motion grid")));
    }
    let n = params.n_factors();
    let mut row = vec![0.0; n];
    let mut stoch = 0.0;
    let mut qv = 0.0;
    for k in 0..k_end {
        let tk = times[k];
        let dt = times[k + 1] - tk;
        stacked_vol_into(e, maturity - tk, &params.vol, &mut row);
        let dx = &motion.increments[k];
        if dx.len() != n {
            return Err(Error::Dimension("motion increment has wrong length".into()));
        }
        stoch += row.iter().zip(dx.iter()).map(|(a, b)| a * b).sum::<f64>();
        let rs = RowDVector::from_row_slice(&row) * &params.sigma;
        qv += rs.norm_squared() * dt;
    }
    let drift = params.theta_prime.vol_integral(e, t, maturity, &params.vol);
    Ok(f0 * drift.exp() * (stoch - 0.5 * qv).exp())
}
