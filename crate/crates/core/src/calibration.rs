//! Estimation of the model from two quote panels: per-energy PCA, the
//! volatility time constants, per-date reconstruction of the motion
//! increments, and the error-correction regression for `Π` and `ΣΣ*`.

use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{compute_returns, CrossSection, QuotePanel, ReturnPanel, RETURN_SANITY_BOUND};
use crate::model::{stacked_vol_into, Energy, EnergyVol, ModelParams, VolParams};
use crate::numerics::{
    bic_subset_select_max, chol_psd, levenberg_marquardt, ols, pca, LmOptions, Matrix, Vector,
    MAX_SUBSET_COLUMNS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub gas_factors: usize,
    pub crude_factors: usize,
    /// Starting values for both time constants, in years; every pair is tried.
    pub tau_starts: Vec<f64>,
    /// Largest support considered per row of `Π`.
    pub bic_max_subset: usize,
    /// Returns with `|r|` at or above this are dropped before estimation.
    pub outlier_threshold: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            gas_factors: 3,
            crude_factors: 3,
            tau_starts: vec![0.1, 0.5, 1.0, 3.0],
            bic_max_subset: 6,
            outlier_threshold: RETURN_SANITY_BOUND,
        }
    }
}

impl CalibrationConfig {
    pub fn factors(&self, e: Energy) -> usize {
        match e {
            Energy::Gas => self.gas_factors,
            Energy::Crude => self.crude_factors,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for e in Energy::ALL {
            if !(1..=3).contains(&self.factors(e)) {
                return Err(Error::Parameter(format!(
                    "{} factor count must be 1, 2 or 3",
                    e.name()
                )));
            }
        }
        if self.tau_starts.is_empty() || self.tau_starts.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::Parameter("tau starts must be non-empty and positive".into()));
        }
        if self.bic_max_subset == 0 {
            return Err(Error::Parameter("BIC subset size must be at least 1".into()));
        }
        if !(self.outlier_threshold > 0.0) {
            return Err(Error::Parameter("outlier threshold must be positive".into()));
        }
        Ok(())
    }
}

/// Principal components of one energy's fixed-bucket return matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSummary {
    pub buckets: usize,
    pub observations: usize,
    /// Mean tenor of each bucket over the rows used.
    pub bucket_tenors: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub explained_variance: Vec<f64>,
    /// First three loading vectors, one per inner vector.
    pub loadings: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauStart {
    pub start: [f64; 2],
    pub tau: Option<[f64; 2]>,
    pub rss: Option<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauFit {
    pub tau1: f64,
    pub tau2: f64,
    pub rss: f64,
    /// Share of the return sum of squares left unexplained.
    pub relative_rss: f64,
    pub starts: Vec<TauStart>,
}

/// Motion increments reconstructed for one energy.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMotion {
    pub energy: Energy,
    /// `(from, to, Δt, ΔX)` per kept cross-section.
    pub steps: Vec<(NaiveDate, NaiveDate, f64, Vec<f64>)>,
    /// Cross-sections skipped for having too few contracts.
    pub flagged: Vec<NaiveDate>,
    pub max_abs_residual: f64,
}

/// Stacked motion of both energies on their common dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructedMotion {
    pub dates: Vec<NaiveDate>,
    /// Year fraction of each interval `dates[k] → dates[k+1]`.
    pub dt: Vec<f64>,
    /// `increments[k] = X(dates[k+1]) − X(dates[k])`.
    pub increments: Vec<Vec<f64>>,
    /// Cumulated motion, `x[0] = 0`.
    pub x: Vec<Vec<f64>>,
}

impl ReconstructedMotion {
    pub fn n_factors(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// Builds a motion from increments, cumulating from zero.
    pub fn from_increments(dates: Vec<NaiveDate>, dt: Vec<f64>, increments: Vec<Vec<f64>>) -> Result<Self> {
        if dates.len() != increments.len() + 1 || dt.len() != increments.len() {
            return Err(Error::Dimension(format!(
                "{} dates, {} steps and {} increments do not line up",
                dates.len(),
                dt.len(),
                increments.len()
            )));
        }
        let n = increments.first().map_or(0, Vec::len);
        let mut x = vec![vec![0.0; n]];
        for d in &increments {
            if d.len() != n {
                return Err(Error::Dimension("increments of unequal length".into()));
            }
            let next: Vec<f64> = x.last().unwrap().iter().zip(d).map(|(a, b)| a + b).collect();
            x.push(next);
        }
        Ok(Self { dates, dt, increments, x })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VecmFit {
    pub pi: Vec<Vec<f64>>,
    pub supports: Vec<Vec<usize>>,
    pub row_bic: Vec<f64>,
    pub sigma_sigma_t: Vec<Vec<f64>>,
    pub covariance_repair: f64,
    /// Standard deviation of each standardized residual component.
    pub residual_std: Vec<f64>,
    /// Lag-one autocorrelation of each standardized residual component.
    pub residual_autocorrelation: Vec<f64>,
    pub observations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub energy: Energy,
    pub returns: usize,
    pub outliers_dropped: usize,
    pub sanity_violations: usize,
    pub pca: PcaSummary,
    pub tau: TauFit,
    pub flagged_dates: Vec<NaiveDate>,
    pub max_reconstruction_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub config: CalibrationConfig,
    pub gas: EnergyReport,
    pub crude: EnergyReport,
    pub motion: ReconstructedMotion,
    pub vecm: VecmFit,
}

impl CalibrationReport {
    pub fn energy(&self, e: Energy) -> &EnergyReport {
        match e {
            Energy::Gas => &self.gas,
            Energy::Crude => &self.crude,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(Matrix::from_fn(n, p, |i, j| rows[i][j]))
}

/// Plain CSV of a matrix, no header.
pub fn write_matrix_csv<W: Write>(m: &[Vec<f64>], mut w: W) -> Result<()> {
    let io = |e: std::io::Error| Error::Format(e.to_string());
    for r in m {
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// PCA of the returns in buckets `1..=k`, `k` the largest bucket count
/// present in at least half of the cross-sections.
pub fn bucket_pca(returns: &ReturnPanel) -> Result<PcaSummary> {
    let k = returns.common_buckets();
    if k < 3 {
        return Err(Error::InsufficientData(format!(
            "{} returns cover {k} common tenor buckets, need 3",
            returns.energy.name()
        )));
    }
    let (m, tenors, used) = returns.bucket_matrix(k);
    let p = pca(&m)?;
    if !(p.eigenvalues[0] > 0.0) {
        return Err(Error::DegenerateVariance(format!(
            "{} returns have zero variance",
            returns.energy.name()
        )));
    }
    let loadings = (0..3.min(k)).map(|c| p.loadings.column(c).iter().copied().collect()).collect();
    Ok(PcaSummary {
        buckets: k,
        observations: used.len(),
        bucket_tenors: tenors,
        eigenvalues: p.eigenvalues.iter().copied().collect(),
        explained_variance: p.explained_variance(),
        loadings,
    })
}

const LOG_TAU_BOUND: f64 = 7.0;

/// Stacks every cross-section's residual from regressing its returns on the
/// volatility basis at the contracts' own tenors.
fn projection_residuals(sections: &[CrossSection], factors: usize, tau1: f64, tau2: f64, out: &mut Vec<f64>) {
    out.clear();
    let ev = EnergyVol::new(factors, tau1, tau2);
    for s in sections {
        let n = s.returns.len();
        let b = Matrix::from_fn(n, factors, |i, j| ev.basis3(s.returns[i].tenor)[j]);
        let y = Vector::from_iterator(n, s.returns.iter().map(|r| r.value));
        let fitted = (b.transpose() * &b)
            .cholesky()
            .map(|c| &b * c.solve(&(b.transpose() * &y)));
        match fitted {
            Some(f) => out.extend((y - f).iter()),
            None => out.extend(y.iter()),
        }
    }
}

/// Time constants of one energy's volatility basis.
///
/// Each cross-section's returns are regressed on `(1, e^{−x/τ₁},
/// (x/τ₂)e^{−x/τ₂})` at their actual tenors, with free coefficients per date,
/// and `(τ₁, τ₂)` minimize the total residual sum of squares. The outer
/// problem runs Levenberg-Marquardt in `ln τ` from every pair of starting
/// values; the lowest RSS wins, ties to the first start.
pub fn fit_tau(returns: &ReturnPanel, factors: usize, starts: &[f64]) -> Result<TauFit> {
    let sections: Vec<CrossSection> = returns
        .sections
        .iter()
        .filter(|s| s.returns.len() >= factors)
        .cloned()
        .collect();
    if sections.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no {} cross-section holds {factors} contracts",
            returns.energy.name()
        )));
    }
    let total: f64 = sections.iter().flat_map(|s| s.returns.iter()).map(|r| r.value * r.value).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateVariance(format!(
            "{} returns are identically zero",
            returns.energy.name()
        )));
    }
    // Only the constants that enter the basis are identifiable.
    let free = factors - 1;
    let pairs: Vec<[f64; 2]> = match free {
        0 => vec![[1.0, 1.0]],
        1 => starts.iter().map(|&a| [a, 1.0]).collect(),
        _ => starts.iter().flat_map(|&a| starts.iter().map(move |&b| [a, b])).collect(),
    };
    let unpack = |p: &Vector, start: [f64; 2]| -> [f64; 2] {
        let t = |v: f64| v.clamp(-LOG_TAU_BOUND, LOG_TAU_BOUND).exp();
        match free {
            0 => start,
            1 => [t(p[0]), start[1]],
            _ => [t(p[0]), t(p[1])],
        }
    };
    let opts = LmOptions::default();
    let results: Vec<TauStart> = pairs
        .par_iter()
        .map(|&start| {
            if free == 0 {
                let mut r = Vec::new();
                projection_residuals(&sections, factors, start[0], start[1], &mut r);
                let rss = r.iter().map(|v| v * v).sum();
                return TauStart { start, tau: Some(start), rss: Some(rss), iterations: 0 };
            }
            let p0 = Vector::from_iterator(free, start[..free].iter().map(|v| v.ln()));
            let mut buf = Vec::new();
            let report = levenberg_marquardt(
                |p| {
                    let [a, b] = unpack(p, start);
                    projection_residuals(&sections, factors, a, b, &mut buf);
                    Vector::from_column_slice(&buf)
                },
                &p0,
                &opts,
            );
            match report {
                Ok(r) if r.rss.is_finite() => TauStart {
                    start,
                    tau: Some(unpack(&r.params, start)),
                    rss: Some(r.rss),
                    iterations: r.iterations,
                },
                Ok(r) => TauStart { start, tau: None, rss: None, iterations: r.iterations },
                Err(Error::NotConverged { iterations, .. }) => {
                    TauStart { start, tau: None, rss: None, iterations }
                }
                Err(_) => TauStart { start, tau: None, rss: None, iterations: 0 },
            }
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in results.iter().enumerate() {
        if let Some(rss) = r.rss {
            if best.is_none_or(|(_, b)| rss < b) {
                best = Some((i, rss));
            }
        }
    }
    let Some((i, rss)) = best else {
        return Err(Error::NotConverged {
            iterations: results.iter().map(|r| r.iterations).sum(),
            best: Vec::new(),
            best_rss: f64::NAN,
        });
    };
    let [tau1, tau2] = results[i].tau.unwrap();
    Ok(TauFit {
        tau1,
        tau2,
        rss,
        relative_rss: rss / total,
        starts: results,
    })
}

/// Per-date least-squares increments `ΔX^e` of one energy. Dates with fewer
/// contracts than factors, or with a singular design, are flagged and skipped.
pub fn reconstruct_energy(returns: &ReturnPanel, vol: &VolParams) -> Result<EnergyMotion> {
    let e = returns.energy;
    let ev = *vol.get(e);
    let nf = ev.factors;
    let mut steps = Vec::new();
    let mut flagged = Vec::new();
    let mut max_res: f64 = 0.0;
    for s in &returns.sections {
        if s.returns.len() < nf {
            flagged.push(s.from);
            continue;
        }
        let n = s.returns.len();
        let b = Matrix::from_fn(n, nf, |i, j| ev.basis3(s.returns[i].tenor)[j]);
        let y = Vector::from_iterator(n, s.returns.iter().map(|r| r.value));
        // Exactly determined dates interpolate; least squares needs spare rows.
        if n == nf {
            match b.lu().solve(&y) {
                Some(v) if v.iter().all(|x| x.is_finite()) => {
                    steps.push((s.from, s.to, s.dt, v.iter().copied().collect()))
                }
                _ => flagged.push(s.from),
            }
            continue;
        }
        match ols(&b, &y) {
            Ok(fit) => {
                max_res = max_res.max(fit.residuals.amax());
                steps.push((s.from, s.to, s.dt, fit.coefficients.iter().copied().collect()));
            }
            Err(Error::SingularDesign { .. }) => flagged.push(s.from),
            Err(err) => return Err(err),
        }
    }
    if steps.is_empty() {
        return Err(Error::InsufficientData(format!("no {} date could be reconstructed", e.name())));
    }
    Ok(EnergyMotion { energy: e, steps, flagged, max_abs_residual: max_res })
}

/// Joins the two energies on the intervals both cover, gas factors first.
/// An interval missing from either side is dropped, and cumulation resumes
/// at the next shared interval.
pub fn stack_motions(gas: &EnergyMotion, crude: &EnergyMotion) -> Result<ReconstructedMotion> {
    let crude_by: std::collections::BTreeMap<(NaiveDate, NaiveDate), &Vec<f64>> =
        crude.steps.iter().map(|(a, b, _, d)| ((*a, *b), d)).collect();
    let mut dates = Vec::new();
    let mut dt = Vec::new();
    let mut incs = Vec::new();
    for (from, to, h, dg) in &gas.steps {
        if let Some(dc) = crude_by.get(&(*from, *to)) {
            if dates.is_empty() {
                dates.push(*from);
            }
            dates.push(*to);
            dt.push(*h);
            incs.push(dg.iter().chain(dc.iter()).copied().collect());
        }
    }
    if incs.is_empty() {
        return Err(Error::InsufficientData("gas and crude share no return interval".into()));
    }
    ReconstructedMotion::from_increments(dates, dt, incs)
}

/// Row-by-row regression of `ΔX^{(i)}/Δt` on the lagged motion, without an
/// intercept, with a BIC-selected support per row.
///
/// Each interval is weighted by `Δt` (rows scaled by `√Δt`), which makes the
/// noise homoskedastic on irregular calendars; the scaled residuals then have
/// covariance `ΣΣ*` directly.
pub fn fit_vecm(motion: &ReconstructedMotion, max_subset: usize) -> Result<VecmFit> {
    let n = motion.n_factors();
    let m = motion.increments.len();
    if n == 0 || m < 10 * n {
        return Err(Error::InsufficientData(format!(
            "error-correction fit needs at least {} intervals, got {m}",
            10 * n
        )));
    }
    if n > MAX_SUBSET_COLUMNS {
        return Err(Error::Parameter(format!("at most {MAX_SUBSET_COLUMNS} factors supported")));
    }
    let design = Matrix::from_fn(m, n, |k, j| motion.x[k][j] * motion.dt[k].sqrt());
    let fits: Vec<Result<_>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let y = Vector::from_fn(m, |k, _| motion.increments[k][i] / motion.dt[k].sqrt());
            let sel = bic_subset_select_max(&design, &y, max_subset.min(n))?;
            let coef = sel.dense_coefficients(n);
            let resid: Vec<f64> = (0..m)
                .map(|k| y[k] - (0..n).map(|j| design[(k, j)] * coef[j]).sum::<f64>())
                .collect();
            Ok((sel, coef, resid))
        })
        .collect();
    let mut pi = Matrix::zeros(n, n);
    let mut supports = Vec::with_capacity(n);
    let mut row_bic = Vec::with_capacity(n);
    let mut resid = Vec::with_capacity(n);
    for (i, f) in fits.into_iter().enumerate() {
        let (sel, coef, r) = f?;
        for j in 0..n {
            pi[(i, j)] = coef[j];
        }
        supports.push(sel.support);
        row_bic.push(sel.bic);
        resid.push(r);
    }
    let means: Vec<f64> = resid.iter().map(|r| r.iter().sum::<f64>() / m as f64).collect();
    let mut cov = Matrix::zeros(n, n);
    for a in 0..n {
        for b in 0..=a {
            let s: f64 = (0..m).map(|k| (resid[a][k] - means[a]) * (resid[b][k] - means[b])).sum();
            cov[(a, b)] = s / (m as f64 - 1.0);
            cov[(b, a)] = cov[(a, b)];
        }
    }
    if cov.diagonal().iter().any(|v| !(*v > 0.0)) {
        return Err(Error::DegenerateVariance("a motion component has no residual variance".into()));
    }
    let repair = chol_psd(&cov)?.repair;
    let residual_std: Vec<f64> = (0..n).map(|a| cov[(a, a)].sqrt()).collect();
    let residual_autocorrelation = (0..n)
        .map(|a| {
            let r = &resid[a];
            let num: f64 = (1..m).map(|k| (r[k] - means[a]) * (r[k - 1] - means[a])).sum();
            num / (cov[(a, a)] * (m as f64 - 1.0))
        })
        .collect();
    Ok(VecmFit {
        pi: rows(&pi),
        supports,
        row_bic,
        sigma_sigma_t: rows(&cov),
        covariance_repair: repair,
        residual_std,
        residual_autocorrelation,
        observations: m,
    })
}

struct EnergyStage {
    report: EnergyReport,
    returns: ReturnPanel,
}

fn energy_stage(panel: &QuotePanel, e: Energy, config: &CalibrationConfig) -> Result<EnergyStage> {
    if panel.energy != e {
        return Err(Error::Parameter(format!(
            "expected a {} panel, got {}",
            e.name(),
            panel.energy.name()
        )));
    }
    let raw = compute_returns(panel).map_err(|err| err.in_stage("returns"))?;
    let (returns, dropped) = raw.without_outliers(config.outlier_threshold);
    let pca = bucket_pca(&returns).map_err(|err| err.in_stage("pca"))?;
    let tau = fit_tau(&returns, config.factors(e), &config.tau_starts).map_err(|err| err.in_stage("tau fit"))?;
    Ok(EnergyStage {
        report: EnergyReport {
            energy: e,
            returns: returns.n_returns(),
            outliers_dropped: dropped.len(),
            sanity_violations: raw.violations.len(),
            pca,
            tau,
            flagged_dates: Vec::new(),
            max_reconstruction_residual: 0.0,
        },
        returns,
    })
}

/// Full estimation from the two panels. The returned parameters have
/// `θ′ ≡ 0`; centering is a separate step.
pub fn calibrate(
    gas: Option<&QuotePanel>,
    crude: Option<&QuotePanel>,
    config: &CalibrationConfig,
) -> Result<(ModelParams, CalibrationReport)> {
    config.validate()?;
    let gas = gas.ok_or_else(|| Error::NoData("gas quote panel is missing".into()))?;
    let crude = crude.ok_or_else(|| Error::NoData("crude quote panel is missing".into()))?;
    let label = |e: Energy| match e {
        Energy::Gas => "gas",
        Energy::Crude => "crude",
    };
    let (g, c) = rayon::join(
        || energy_stage(gas, Energy::Gas, config),
        || energy_stage(crude, Energy::Crude, config),
    );
    let mut g = g.map_err(|err| err.in_stage(label(Energy::Gas)))?;
    let mut c = c.map_err(|err| err.in_stage(label(Energy::Crude)))?;
    let vol = VolParams {
        gas: EnergyVol::new(config.gas_factors, g.report.tau.tau1, g.report.tau.tau2),
        crude: EnergyVol::new(config.crude_factors, c.report.tau.tau1, c.report.tau.tau2),
    };
    let mg = reconstruct_energy(&g.returns, &vol).map_err(|err| err.in_stage("reconstruction"))?;
    let mc = reconstruct_energy(&c.returns, &vol).map_err(|err| err.in_stage("reconstruction"))?;
    g.report.flagged_dates = mg.flagged.clone();
    g.report.max_reconstruction_residual = mg.max_abs_residual;
    c.report.flagged_dates = mc.flagged.clone();
    c.report.max_reconstruction_residual = mc.max_abs_residual;
    let motion = stack_motions(&mg, &mc).map_err(|err| err.in_stage("reconstruction"))?;
    let vecm = fit_vecm(&motion, config.bic_max_subset).map_err(|err| err.in_stage("error correction"))?;
    let params = ModelParams::new(vol, matrix_from_rows(&vecm.pi)?, matrix_from_rows(&vecm.sigma_sigma_t)?)
        .map_err(|err| err.in_stage("parameters"))?;
    let report = CalibrationReport {
        config: config.clone(),
        gas: g.report,
        crude: c.report,
        motion,
        vecm,
    };
    Ok((params, report))
}

/// Stacked volatility row of energy `e` at `tenor`, used to check a
/// reconstruction against returns.
pub fn vol_row(e: Energy, tenor: f64, vol: &VolParams) -> Vec<f64> {
    let mut out = vec![0.0; vol.n_factors()];
    stacked_vol_into(e, tenor, vol, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{ContractReturn, DeliveryMonth};
    use crate::presets;
    use crate::simulation::{synthesize_panels, SynthConfig};

    fn section(day: u32, tenors: &[f64], values: &[f64]) -> CrossSection {
        let from = NaiveDate::from_ymd_opt(2020, 1, day).unwrap();
        let to = from.succ_opt().unwrap();
        CrossSection {
            from,
            to,
            dt: 1.0 / 365.0,
            returns: tenors
                .iter()
                .zip(values)
                .enumerate()
                .map(|(i, (&tenor, &value))| ContractReturn {
                    delivery_month: DeliveryMonth::new(2020, 2 + i as u32).unwrap(),
                    from,
                    to,
                    dt: 1.0 / 365.0,
                    tenor,
                    bucket: i + 1,
                    value,
                })
                .collect(),
        }
    }

    #[test]
    fn exact_returns_reconstruct_exactly() {
        let vol = presets::reference_vol();
        let v = [0.01, -0.02, 0.005];
        let tenors = [0.1, 0.3, 0.6, 0.9];
        let values: Vec<f64> = tenors
            .iter()
            .map(|&x| {
                let b = vol.gas.basis3(x);
                b.iter().zip(&v).map(|(a, c)| a * c).sum()
            })
            .collect();
        let panel = ReturnPanel {
            energy: Energy::Gas,
            sections: vec![section(2, &tenors, &values), section(5, &tenors[..2], &values[..2])],
            violations: vec![],
        };
        let m = reconstruct_energy(&panel, &vol).unwrap();
        assert_eq!(m.steps.len(), 1);
        assert_eq!(m.flagged, vec![NaiveDate::from_ymd_opt(2020, 1, 5).unwrap()]);
        for (a, b) in m.steps[0].3.iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(m.max_abs_residual < 1e-12);
    }

    #[test]
    fn one_factor_increment_is_the_return() {
        let vol = VolParams {
            gas: EnergyVol::new(1, 1.0, 1.0),
            crude: EnergyVol::new(1, 1.0, 1.0),
        };
        let panel = ReturnPanel {
            energy: Energy::Crude,
            sections: vec![section(2, &[0.2], &[0.013])],
            violations: vec![],
        };
        let m = reconstruct_energy(&panel, &vol).unwrap();
        assert!((m.steps[0].3[0] - 0.013).abs() < 1e-15);
    }

    #[test]
    fn vecm_recovers_covariance_of_brownian_motion() {
        let n = 2;
        let m = 4000;
        let dt: f64 = 1.0 / 365.0;
        let mut rng = crate::simulation::path_rng(11, 0);
        let mut z = vec![0.0; m * n];
        crate::simulation::standard_normals(&mut rng, &mut z);
        let incs: Vec<Vec<f64>> = (0..m).map(|k| vec![0.2 * z[2 * k] * dt.sqrt(), 0.1 * z[2 * k + 1] * dt.sqrt()]).collect();
        let d0 = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        let dates = (0..=m).map(|k| d0 + chrono::Duration::days(k as i64)).collect();
        let motion = ReconstructedMotion::from_increments(dates, vec![dt; m], incs).unwrap();
        let fit = fit_vecm(&motion, 2).unwrap();
        assert!((fit.sigma_sigma_t[0][0] / 0.04 - 1.0).abs() < 0.1);
        assert!((fit.sigma_sigma_t[1][1] / 0.01 - 1.0).abs() < 0.1);
        assert!((fit.sigma_sigma_t[0][1] - fit.sigma_sigma_t[1][0]).abs() < 1e-15);
        for (i, s) in fit.supports.iter().enumerate() {
            for j in 0..n {
                if !s.contains(&j) {
                    assert_eq!(fit.pi[i][j], 0.0);
                }
            }
        }
    }

    #[test]
    fn vecm_needs_enough_observations() {
        let d0 = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        let dates = (0..=5).map(|k| d0 + chrono::Duration::days(k)).collect();
        let motion = ReconstructedMotion::from_increments(dates, vec![0.01; 5], vec![vec![0.1, 0.2]; 5]).unwrap();
        assert!(matches!(fit_vecm(&motion, 2), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn missing_crude_is_named() {
        let s = synthesize_panels(&presets::reference_params(), &SynthConfig { years: 0.3, ..Default::default() }).unwrap();
        let err = calibrate(Some(&s.gas), None, &CalibrationConfig::default()).unwrap_err();
        assert!(err.to_string().contains("crude"));
    }

    #[test]
    fn noiseless_panels_give_exact_tau_and_motion() {
        let truth = presets::reference_params();
        let s = synthesize_panels(&truth, &SynthConfig { years: 1.0, seed: 2, ..Default::default() }).unwrap();
        let (p, report) = calibrate(Some(&s.gas), Some(&s.crude), &CalibrationConfig::default()).unwrap();
        for e in Energy::ALL {
            let (a, b) = (p.vol.get(e), truth.vol.get(e));
            assert!((a.tau1 / b.tau1 - 1.0).abs() < 1e-6, "{e}: {}", a.tau1);
            assert!((a.tau2 / b.tau2 - 1.0).abs() < 1e-6, "{e}: {}", a.tau2);
            assert!(report.energy(e).max_reconstruction_residual < 1e-10);
            let shares: f64 = report.energy(e).pca.explained_variance.iter().sum();
            assert!((shares - 1.0).abs() < 1e-12);
        }
        let last = report.motion.x.last().unwrap();
        let k = s.dates.iter().position(|d| d == report.motion.dates.last().unwrap()).unwrap();
        for i in 0..6 {
            assert!((last[i] - s.motion[k * 6 + i]).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_prices_are_degenerate() {
        let s = synthesize_panels(&presets::reference_params(), &SynthConfig { years: 0.3, ..Default::default() }).unwrap();
        let flat: Vec<_> = s
            .gas
            .records()
            .iter()
            .map(|r| crate::market_data::QuoteRecord { price: 10.0, ..*r })
            .collect();
        let gas = QuotePanel::new(Energy::Gas, "x", flat).unwrap();
        let err = calibrate(Some(&gas), Some(&s.crude), &CalibrationConfig::default()).unwrap_err();
        assert_eq!(err.class(), crate::ErrorClass::Data, "{err}");
    }
}
