//! Expected forward ratios under the historical measure and the centering
//! drift `θ′` that puts them back on the initial curve.
//!
//! With `θ′ = 0`, `E[F(t,T)/F(0,T)] = m(t,T)` where
//!
//! ```text
//! ln m = ∫_0^t ½|J(s)Σ|² + σ(T-s) ΣΣ* J(s)ᵀ ds,   J(s) = ∫_s^t σ(T-u) Π e^{(u-s)Π} du
//! ```
//!
//! and a nonzero `θ′` multiplies it by `exp(∫_0^t σ(T-s) θ′_s ds)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::ForwardCurve;
use crate::model::{stacked_vol_into, Energy, ModelParams, ThetaPrime};
use crate::numerics::{expm, ols, simpson_nodes, Matrix, Vector, DAYS_PER_YEAR};

pub const DEFAULT_PANELS: usize = 64;

/// Panel counts of the nested Simpson rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MomentQuadrature {
    pub outer_panels: usize,
    pub inner_panels: usize,
}

impl Default for MomentQuadrature {
    fn default() -> Self {
        Self {
            outer_panels: DEFAULT_PANELS,
            inner_panels: DEFAULT_PANELS,
        }
    }
}

impl MomentQuadrature {
    fn validate(&self) -> Result<()> {
        if self.outer_panels < 1 || self.inner_panels < 1 {
            return Err(Error::Parameter("quadrature needs at least one panel".into()));
        }
        Ok(())
    }
}

/// The three outer integrals sharing one set of quadrature nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentTerms {
    /// `ln m(t, T)`.
    pub log_moment: f64,
    /// `∫_0^t |J(s)Σ + σ(T-s)Σ|² ds`.
    pub variance: f64,
    /// `∫_0^t |σ(T-s)Σ|² ds`.
    pub quadratic_variation: f64,
}

fn check_times(t: f64, maturity: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite() && maturity.is_finite()) || t > maturity {
        return Err(Error::Parameter(format!(
            "need 0 <= t <= T, got t={t}, T={maturity}"
        )));
    }
    Ok(())
}

/// Evaluates the moment integrals for one `(t, T)`.
///
/// The inner nodes are equally spaced, so `e^{(u_k - s)Π}` is built by
/// repeated multiplication with `e^{hΠ}` instead of one exponential per node.
pub fn moment_terms(
    e: Energy,
    t: f64,
    maturity: f64,
    params: &ModelParams,
    quad: MomentQuadrature,
) -> Result<MomentTerms> {
    check_times(t, maturity)?;
    quad.validate()?;
    if t == 0.0 {
        return Ok(MomentTerms {
            log_moment: 0.0,
            variance: 0.0,
            quadratic_variation: 0.0,
        });
    }
    let n = params.n_factors();
    let off = params.vol.offset(e);
    let nf = params.vol.get(e).factors;
    let pi_zero = params.pi.iter().all(|&x| x == 0.0);
    let sigma = &params.sigma;

    let mut r = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut j = vec![0.0; n];
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    // Rows `off..off+nf` of Π e^{kh Π}, the only ones σ^e touches.
    let mut block = vec![0.0; nf * n];
    let mut next = vec![0.0; nf * n];

    // Tenors below `knee_tenor` carry the sharp curvature hump, so each
    // Simpson rule gives half its panels to that stretch.
    let ev = params.vol.get(e);
    let knee_tenor = if ev.factors >= 3 { KNEE_TAUS * ev.tau2 } else { 0.0 };
    let knee = maturity - knee_tenor;

    let (mut log_m, mut var, mut qv) = (0.0, 0.0, 0.0);
    let mut steps: Vec<(f64, Matrix)> = Vec::with_capacity(2);
    for (s, ws, _) in graded_nodes(0.0, t, quad.outer_panels, knee) {
        j.iter_mut().for_each(|v| *v = 0.0);
        if !pi_zero && s < t {
            steps.clear();
            for i in 0..nf {
                for c in 0..n {
                    block[i * n + c] = params.pi[(off + i, c)];
                }
            }
            for (u, wu, h) in graded_nodes(s, t, quad.inner_panels, knee) {
                if h > 0.0 {
                    let idx = match steps.iter().position(|(hh, _)| *hh == h) {
                        Some(i) => i,
                        None => {
                            steps.push((h, expm(&(&params.pi * h))?));
                            steps.len() - 1
                        }
                    };
                    let step = &steps[idx].1;
                    for i in 0..nf {
                        for c in 0..n {
                            let mut acc = 0.0;
                            for l in 0..n {
                                acc += block[i * n + l] * step[(l, c)];
                            }
                            next[i * n + c] = acc;
                        }
                    }
                    std::mem::swap(&mut block, &mut next);
                }
                stacked_vol_into(e, maturity - u, &params.vol, &mut q);
                for c in 0..n {
                    let mut acc = 0.0;
                    for i in 0..nf {
                        acc += q[off + i] * block[i * n + c];
                    }
                    j[c] += wu * acc;
                }
            }
        }
        stacked_vol_into(e, maturity - s, &params.vol, &mut r);
        row_times(&j, sigma, &mut a);
        row_times(&r, sigma, &mut b);
        let aa: f64 = a.iter().map(|x| x * x).sum();
        let ab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let bb: f64 = b.iter().map(|x| x * x).sum();
        log_m += ws * (0.5 * aa + ab);
        var += ws * (aa + 2.0 * ab + bb);
        qv += ws * bb;
    }
    Ok(MomentTerms {
        log_moment: log_m,
        variance: var,
        quadratic_variation: qv,
    })
}

/// Multiples of `τ₂` below which a tenor counts as short.
const KNEE_TAUS: f64 = 8.0;

/// Composite Simpson nodes on `[a, b]` using `panels` panels in total, as
/// `(x, weight, spacing from the previous node)`. When `knee` lies strictly
/// inside, the panels are split evenly between `[a, knee]` and `[knee, b]`;
/// otherwise the rule is uniform. At most two distinct spacings occur.
fn graded_nodes(a: f64, b: f64, panels: usize, knee: f64) -> Vec<(f64, f64, f64)> {
    let panels = panels.max(1);
    if !(knee > a && knee < b) || panels < 2 {
        return uniform_nodes(a, b, panels);
    }
    let left = panels / 2;
    let mut nodes = uniform_nodes(a, knee, left);
    let right = uniform_nodes(knee, b, panels - left);
    nodes.last_mut().unwrap().1 += right[0].1;
    nodes.extend_from_slice(&right[1..]);
    nodes
}

fn uniform_nodes(a: f64, b: f64, panels: usize) -> Vec<(f64, f64, f64)> {
    let h = (b - a) / (2 * panels) as f64;
    simpson_nodes(a, b, panels)
        .enumerate()
        .map(|(i, (x, w))| (x, w, if i == 0 { 0.0 } else { h }))
        .collect()
}

/// `out = row · Σ` for lower-triangular `Σ`.
fn row_times(row: &[f64], sigma: &Matrix, out: &mut [f64]) {
    let n = row.len();
    for c in 0..n {
        let mut acc = 0.0;
        for i in c..n {
            acc += row[i] * sigma[(i, c)];
        }
        out[c] = acc;
    }
}

/// `E[F(t,T)/F(0,T)]` with `θ′ = 0` (the stored `θ′` is ignored).
pub fn closed_form_moment(e: Energy, t: f64, maturity: f64, params: &ModelParams) -> Result<f64> {
    closed_form_moment_with(e, t, maturity, params, MomentQuadrature::default())
}

pub fn closed_form_moment_with(
    e: Energy,
    t: f64,
    maturity: f64,
    params: &ModelParams,
    quad: MomentQuadrature,
) -> Result<f64> {
    Ok(moment_terms(e, t, maturity, params, quad)?.log_moment.exp())
}

/// Variance of the Gaussian integral `∫_0^t (J(s)Σ + σ(T-s)Σ) dW_s`.
pub fn wiener_variance(e: Energy, t: f64, maturity: f64, params: &ModelParams) -> Result<f64> {
    Ok(moment_terms(e, t, maturity, params, MomentQuadrature::default())?.variance)
}

/// `∫_0^t |σ(T-s)Σ|² ds` on the same nodes as [`wiener_variance`].
pub fn quadratic_variation(e: Energy, t: f64, maturity: f64, params: &ModelParams) -> Result<f64> {
    Ok(moment_terms(e, t, maturity, params, MomentQuadrature::default())?.quadratic_variation)
}

/// `E[F(t,T)/F(0,T)]` including the stored `θ′`.
pub fn centered_expectation(e: Energy, t: f64, maturity: f64, params: &ModelParams) -> Result<f64> {
    centered_expectation_with(e, t, maturity, params, MomentQuadrature::default())
}

pub fn centered_expectation_with(
    e: Energy,
    t: f64,
    maturity: f64,
    params: &ModelParams,
    quad: MomentQuadrature,
) -> Result<f64> {
    let log_m = moment_terms(e, t, maturity, params, quad)?.log_moment;
    let drift = params.theta_prime.vol_integral(e, t, maturity, &params.vol);
    Ok((log_m + drift).exp())
}

/// Tenors `T - t` at which the fit and the centering checks are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TenorFan {
    pub gas: Vec<f64>,
    pub crude: Vec<f64>,
}

impl TenorFan {
    pub const DEFAULT_COUNT: usize = 12;

    /// `count` equally spaced tenors between the shortest and longest quoted
    /// maturity of each curve.
    pub fn from_curves(gas: &ForwardCurve, crude: &ForwardCurve, count: usize) -> Result<Self> {
        let span = |c: &ForwardCurve| {
            let lo = c.maturities[0].max(1.0 / DAYS_PER_YEAR);
            let hi = *c.maturities.last().unwrap();
            linspace(lo, hi.max(lo), count)
        };
        Self::new(span(gas), span(crude))
    }

    /// Monthly contracts: 9 gas months and 15 crude months, spanned by 12
    /// tenors each.
    pub fn reference() -> Self {
        Self {
            gas: linspace(1.0 / 12.0, 9.0 / 12.0, Self::DEFAULT_COUNT),
            crude: linspace(1.0 / 12.0, 15.0 / 12.0, Self::DEFAULT_COUNT),
        }
    }

    pub fn new(gas: Vec<f64>, crude: Vec<f64>) -> Result<Self> {
        let ok = |v: &[f64]| !v.is_empty() && v.iter().all(|x| x.is_finite() && *x >= 0.0);
        if !ok(&gas) || !ok(&crude) {
            return Err(Error::Parameter("tenor fan needs non-negative tenors for both energies".into()));
        }
        Ok(Self { gas, crude })
    }

    pub fn get(&self, e: Energy) -> &[f64] {
        match e {
            Energy::Gas => &self.gas,
            Energy::Crude => &self.crude,
        }
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaFitConfig {
    /// Pieces of `θ′` cover `[0, horizon]`.
    pub horizon: f64,
    pub pieces_per_year: usize,
    /// Tenors of the quoted curves.
    pub fan: TenorFan,
    /// Stretch each fan to `[shortest, longest + horizon]` when fitting. A
    /// fixed-tenor point `(t, t + x)` depends on `θ′_s` through `σ(t + x - s)`,
    /// so the conditions must hold at tenors up to `x + t`.
    pub extend_fan: bool,
    /// Step of the central difference in `t`.
    pub fd_step: f64,
    pub quadrature: MomentQuadrature,
}

impl Default for ThetaFitConfig {
    fn default() -> Self {
        Self {
            horizon: 3.0,
            pieces_per_year: 12,
            fan: TenorFan::reference(),
            extend_fan: true,
            fd_step: 1.0 / DAYS_PER_YEAR,
            quadrature: MomentQuadrature::default(),
        }
    }
}

impl ThetaFitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) || self.pieces_per_year == 0 {
            return Err(Error::Parameter("theta fit needs a positive horizon and piece count".into()));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::Parameter("finite-difference step must be positive".into()));
        }
        self.quadrature.validate()
    }

    /// Knots `0, 1/k, 2/k, …` up to and including the horizon.
    pub fn knots(&self) -> Vec<f64> {
        let k = self.pieces_per_year as f64;
        let count = (self.horizon * k - 1e-9).ceil().max(1.0) as usize;
        let mut knots: Vec<f64> = (0..count).map(|i| i as f64 / k).collect();
        knots.push(self.horizon);
        knots
    }

    /// Tenors used as equations in the fit.
    pub fn fit_fan(&self) -> TenorFan {
        if !self.extend_fan {
            return self.fan.clone();
        }
        let stretch = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            linspace(lo, hi + self.horizon, v.len())
        };
        TenorFan {
            gas: stretch(&self.fan.gas),
            crude: stretch(&self.fan.crude),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaFit {
    pub theta_prime: ThetaPrime,
    /// Root mean square of the stacked least-squares residuals.
    pub residual_rms: f64,
    pub max_abs_residual: f64,
}

/// Fits a piecewise-constant `θ′` so that `σ^e(T-t) θ′_t = -∂_t ln m^e(t, T)`
/// holds in the least-squares sense on the tenor fan of both energies.
///
/// Each piece is fitted at its midpoint.
pub fn fit_theta_prime(params: &ModelParams, config: &ThetaFitConfig) -> Result<ThetaFit> {
    config.validate()?;
    let n = params.n_factors();
    let knots = config.knots();
    let h = config.fd_step;
    let fan = config.fit_fan();
    let rows: Vec<(Energy, f64)> = Energy::ALL
        .iter()
        .flat_map(|&e| fan.get(e).iter().map(|&x| (e, x)).collect::<Vec<_>>())
        .collect();
    if rows.len() < n {
        return Err(Error::Singular(format!(
            "tenor fan has {} equations for {n} unknowns; use a larger fan",
            rows.len()
        )));
    }

    let pieces: Vec<(f64, f64)> = knots.windows(2).map(|w| (w[0], w[1])).collect();
    let solved: Vec<Result<(Vec<f64>, Vec<f64>)>> = pieces
        .par_iter()
        .map(|&(a, b)| {
            let tm = 0.5 * (a + b);
            let dh = h.min(tm);
            let mut design = Matrix::zeros(rows.len(), n);
            let mut rhs = Vector::zeros(rows.len());
            let mut row = vec![0.0; n];
            for (i, &(e, x)) in rows.iter().enumerate() {
                let maturity = tm + x;
                let up = moment_terms(e, tm + dh, maturity, params, config.quadrature)?.log_moment;
                let dn = moment_terms(e, tm - dh, maturity, params, config.quadrature)?.log_moment;
                rhs[i] = -(up - dn) / (2.0 * dh);
                stacked_vol_into(e, x, &params.vol, &mut row);
                for c in 0..n {
                    design[(i, c)] = row[c];
                }
            }
            let fit = ols(&design, &rhs).map_err(|err| match err {
                Error::SingularDesign { rank, cols } => Error::Singular(format!(
                    "stacked centering system has rank {rank} < {cols}; use a larger tenor fan"
                )),
                other => other,
            })?;
            Ok((fit.coefficients.as_slice().to_vec(), fit.residuals.as_slice().to_vec()))
        })
        .collect();

    let mut values = Vec::with_capacity(pieces.len());
    let mut sq = 0.0;
    let mut count = 0usize;
    let mut max_abs: f64 = 0.0;
    for res in solved {
        let (v, r) = res?;
        for x in &r {
            sq += x * x;
            max_abs = max_abs.max(x.abs());
        }
        count += r.len();
        values.push(v);
    }
    Ok(ThetaFit {
        theta_prime: ThetaPrime::new(knots, values)?,
        residual_rms: (sq / count.max(1) as f64).sqrt(),
        max_abs_residual: max_abs,
    })
}

/// Values of a moment-type function on a grid of `(t, T)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSurface {
    pub energy: Energy,
    pub points: Vec<SurfacePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub t: f64,
    #[serde(rename = "T")]
    pub maturity: f64,
    pub value: f64,
}

impl MomentSurface {
    pub fn max_abs_deviation(&self) -> f64 {
        self.points
            .iter()
            .map(|p| (p.value - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// `centered_expectation` on every `(t, t + x)` with `t` in `times` and `x`
/// in the energy's fan.
pub fn centering_surface(
    e: Energy,
    params: &ModelParams,
    times: &[f64],
    tenors: &[f64],
    quad: MomentQuadrature,
) -> Result<MomentSurface> {
    let pairs: Vec<(f64, f64)> = times
        .iter()
        .flat_map(|&t| tenors.iter().map(move |&x| (t, t + x)))
        .collect();
    let values: Result<Vec<SurfacePoint>> = pairs
        .par_iter()
        .map(|&(t, maturity)| {
            Ok(SurfacePoint {
                t,
                maturity,
                value: centered_expectation_with(e, t, maturity, params, quad)?,
            })
        })
        .collect();
    Ok(MomentSurface {
        energy: e,
        points: values?,
    })
}

/// Long CSV with columns `energy,t,T,value`.
pub fn write_surfaces_csv<W: Write>(surfaces: &[MomentSurface], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["energy", "t", "T", "value"]).map_err(fmt)?;
    for s in surfaces {
        for p in &s.points {
            w.write_record([
                s.energy.tag().to_string(),
                p.t.to_string(),
                p.maturity.to_string(),
                p.value.to_string(),
            ])
            .map_err(fmt)?;
        }
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

/// Long CSV with columns `t,component,value`, one row per piece start.
pub fn write_theta_prime_csv<W: Write>(theta: &ThetaPrime, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["t", "component", "value"]).map_err(fmt)?;
    for (t, v) in theta.grid.iter().zip(&theta.values) {
        for (i, x) in v.iter().enumerate() {
            w.write_record([t.to_string(), i.to_string(), x.to_string()])
                .map_err(fmt)?;
        }
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}
