use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::{path_rng, standard_normals};
use super::{MaturityMode, Scheme, SimConfig};
use crate::error::{Error, Result};
use crate::market_data::CurvePair;
use crate::model::{stacked_vol_into, Energy, MeasureTag, ModelParams};
use crate::numerics::{CompensatedSum, TimeGrid};

/// Paths per work unit. Fixed so results do not depend on the thread count.
pub(crate) const CHUNK: usize = 256;

/// Centered-motion increments `ΔX̃_k` (row-major, steps × N) from standard
/// normals `z` of the same shape.
///
/// Under the historical measure `ΔX̃_k = ΠX̃_k Δt + Σ√Δt z_k`; under the
/// risk-neutral measure the drift term is not evaluated at all.
pub fn motion_increments_from_noise(
    params: &ModelParams,
    measure: MeasureTag,
    grid: &TimeGrid,
    z: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let n = params.n_factors();
    let steps = grid.n_steps();
    if z.len() != steps * n || out.len() != steps * n {
        return Err(Error::Dimension(format!(
            "noise buffers must hold {steps} x {n} values"
        )));
    }
    let mut x = vec![0.0; n];
    for k in 0..steps {
        let dt = grid.step(k);
        let sq = dt.sqrt();
        let zk = &z[k * n..(k + 1) * n];
        let dk = &mut out[k * n..(k + 1) * n];
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..=i {
                s += params.sigma[(i, j)] * zk[j];
            }
            dk[i] = s * sq;
        }
        if measure == MeasureTag::Historical {
            for i in 0..n {
                let mut drift = 0.0;
                for j in 0..n {
                    drift += params.pi[(i, j)] * x[j];
                }
                dk[i] += drift * dt;
            }
        }
        for i in 0..n {
            x[i] += dk[i];
        }
    }
    Ok(())
}

fn path_increments(params: &ModelParams, measure: MeasureTag, grid: &TimeGrid, seed: u64, path: usize, z: &mut [f64], out: &mut [f64]) -> Result<()> {
    let mut rng = path_rng(seed, path as u64);
    standard_normals(&mut rng, z);
    motion_increments_from_noise(params, measure, grid, z, out)
}

/// One realization of the motion `X` on the simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionPath {
    n: usize,
    /// Row-major, grid points × N.
    values: Vec<f64>,
}

impl MotionPath {
    pub fn n_factors(&self) -> usize {
        self.n
    }

    pub fn n_points(&self) -> usize {
        self.values.len() / self.n
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.n..(k + 1) * self.n]
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        self.values.iter().skip(i).step_by(self.n).copied().collect()
    }
}

#[derive(Debug, Clone)]
pub struct MotionBatch {
    pub grid: TimeGrid,
    pub measure: MeasureTag,
    pub paths: Vec<MotionPath>,
}

/// Simulates `X` with `X₀ = 0`. Under the historical measure
/// `X_t = X̃_t + θ_t`; under the risk-neutral measure `X = X̃ = ΣB`.
pub fn simulate_motions(params: &ModelParams, config: &SimConfig) -> Result<MotionBatch> {
    config.validate()?;
    let grid = config.grid()?;
    let n = params.n_factors();
    let steps = grid.n_steps();
    let thetas: Vec<Vec<f64>> = grid
        .times()
        .iter()
        .map(|&t| match config.measure {
            MeasureTag::Historical => params.theta_prime.theta_at(t, n).as_slice().to_vec(),
            MeasureTag::RiskNeutral => vec![0.0; n],
        })
        .collect();
    let paths: Result<Vec<MotionPath>> = (0..config.paths)
        .into_par_iter()
        .map_init(
            || (vec![0.0; steps * n], vec![0.0; steps * n]),
            |(z, dx), p| {
                path_increments(params, config.measure, &grid, config.seed, p, z, dx)?;
                let mut values = vec![0.0; (steps + 1) * n];
                let mut xt = vec![0.0; n];
                for k in 0..=steps {
                    if k > 0 {
                        for i in 0..n {
                            xt[i] += dx[(k - 1) * n + i];
                        }
                    }
                    for i in 0..n {
                        values[k * n + i] = xt[i] + thetas[k][i];
                    }
                }
                Ok(MotionPath { n, values })
            },
        )
        .collect();
    Ok(MotionBatch {
        grid,
        measure: config.measure,
        paths: paths?,
    })
}

/// Per-step volatility rows and quadratic-variation increments of one
/// contract, valid for the first `active` steps.
struct StepWeights {
    /// steps × factors of the energy.
    sig: Vec<f64>,
    /// `|σ(T − t_k) Σ|² Δt_k`.
    qv: Vec<f64>,
    active: usize,
}

fn step_weights(params: &ModelParams, e: Energy, maturity: f64, grid: &TimeGrid, k_end: usize) -> StepWeights {
    let n = params.n_factors();
    let off = params.vol.offset(e);
    let nf = params.vol.get(e).factors;
    let times = grid.times();
    let active = times[..k_end].iter().take_while(|&&t| t < maturity).count();
    let mut sig = vec![0.0; active * nf];
    let mut qv = vec![0.0; active];
    let mut row = vec![0.0; n];
    for k in 0..active {
        stacked_vol_into(e, maturity - times[k], &params.vol, &mut row);
        sig[k * nf..(k + 1) * nf].copy_from_slice(&row[off..off + nf]);
        let mut q = 0.0;
        for c in 0..n {
            let mut acc = 0.0;
            for i in off.max(c)..off + nf {
                acc += row[i] * params.sigma[(i, c)];
            }
            q += acc * acc;
        }
        qv[k] = q * grid.step(k);
    }
    StepWeights { sig, qv, active }
}

/// Everything about a forward computation that is shared across paths.
struct Plan<'a> {
    params: &'a ModelParams,
    grid: &'a TimeGrid,
    curves: &'a CurvePair,
    maturities: &'a [f64],
    mode: MaturityMode,
    scheme: Scheme,
    measure: MeasureTag,
    records: &'a [usize],
    /// Fixed-maturity weights, indexed `j * 2 + energy`.
    fixed: Vec<StepWeights>,
    /// `θ′_{t_k} Δt_k` per step (historical Euler only).
    theta_steps: Vec<f64>,
}

fn energy_index(e: Energy) -> usize {
    match e {
        Energy::Gas => 0,
        Energy::Crude => 1,
    }
}

impl<'a> Plan<'a> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        params: &'a ModelParams,
        curves: &'a CurvePair,
        grid: &'a TimeGrid,
        maturities: &'a [f64],
        mode: MaturityMode,
        scheme: Scheme,
        measure: MeasureTag,
        records: &'a [usize],
    ) -> Result<Self> {
        if records.iter().any(|&r| r >= grid.len()) || records.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("record indices must be increasing grid indices".into()));
        }
        let k_end = records.last().copied().unwrap_or(0);
        let fixed = match mode {
            MaturityMode::FixedMaturity => maturities
                .iter()
                .flat_map(|&m| Energy::ALL.map(|e| step_weights(params, e, m, grid, k_end)))
                .collect(),
            MaturityMode::FixedTenor => Vec::new(),
        };
        let n = params.n_factors();
        let theta_steps = if scheme == Scheme::Euler && measure == MeasureTag::Historical {
            let mut v = vec![0.0; grid.n_steps() * n];
            let mut buf = vec![0.0; n];
            for k in 0..grid.n_steps() {
                params.theta_prime.value_into(grid.times()[k], &mut buf);
                for i in 0..n {
                    v[k * n + i] = buf[i] * grid.step(k);
                }
            }
            v
        } else {
            Vec::new()
        };
        Ok(Self {
            params,
            grid,
            curves,
            maturities,
            mode,
            scheme,
            measure,
            records,
            fixed,
            theta_steps,
        })
    }

    fn n_cells(&self) -> usize {
        self.records.len() * self.maturities.len() * 2
    }

    fn cell(&self, r: usize, j: usize, e: Energy) -> usize {
        (r * self.maturities.len() + j) * 2 + energy_index(e)
    }

    /// Maturity of cell `(r, j)`.
    fn maturity(&self, r: usize, j: usize) -> f64 {
        match self.mode {
            MaturityMode::FixedMaturity => self.maturities[j],
            MaturityMode::FixedTenor => self.grid.times()[self.records[r]] + self.maturities[j],
        }
    }

    /// `ln` of the centering factor `exp(∫_0^t σ(T − s) θ′_s ds)`.
    fn centering(&self, e: Energy, t: f64, maturity: f64) -> f64 {
        match self.measure {
            MeasureTag::Historical => self
                .params
                .theta_prime
                .vol_integral(e, t.min(maturity), maturity, &self.params.vol),
            MeasureTag::RiskNeutral => 0.0,
        }
    }

    /// Prices of every cell for one path of centered increments. Returns
    /// the number of Euler steps with `|σΔX| ≥ 1`.
    fn price_path(&self, dx: &[f64], out: &mut [f64]) -> usize {
        let mut flagged = 0;
        match self.mode {
            MaturityMode::FixedMaturity => {
                for (j, &m) in self.maturities.iter().enumerate() {
                    for e in Energy::ALL {
                        let w = &self.fixed[j * 2 + energy_index(e)];
                        flagged += self.walk(e, m, w, dx, |r, price| {
                            out[self.cell(r, j, e)] = price;
                        }, None);
                    }
                }
            }
            MaturityMode::FixedTenor => {
                for (r, &g) in self.records.iter().enumerate() {
                    for j in 0..self.maturities.len() {
                        let m = self.maturity(r, j);
                        for e in Energy::ALL {
                            let w = step_weights(self.params, e, m, self.grid, g);
                            flagged += self.walk(e, m, &w, dx, |rr, price| {
                                if rr == r {
                                    out[self.cell(r, j, e)] = price;
                                }
                            }, Some(r));
                        }
                    }
                }
            }
        }
        flagged
    }

    /// Walks one contract along the grid, reporting its price at each
    /// record index up to `last_record` (all records when `None`).
    fn walk<F: FnMut(usize, f64)>(
        &self,
        e: Energy,
        maturity: f64,
        w: &StepWeights,
        dx: &[f64],
        mut emit: F,
        last_record: Option<usize>,
    ) -> usize {
        let n = self.params.n_factors();
        let off = self.params.vol.offset(e);
        let nf = self.params.vol.get(e).factors;
        let f0 = self.curves.get(e).price_at(maturity);
        let times = self.grid.times();
        let n_rec = last_record.map_or(self.records.len(), |r| r + 1);
        let mut flagged = 0;
        let mut log_sum = 0.0;
        let mut price = f0;
        let mut k = 0;
        for r in 0..n_rec {
            let g = self.records[r];
            while k < g {
                if k < w.active {
                    let sig = &w.sig[k * nf..(k + 1) * nf];
                    let d = &dx[k * n + off..k * n + off + nf];
                    match self.scheme {
                        Scheme::Exponential => {
                            let mut s = 0.0;
                            for i in 0..nf {
                                s += sig[i] * d[i];
                            }
                            log_sum += s - 0.5 * w.qv[k];
                        }
                        Scheme::Euler => {
                            let mut s = 0.0;
                            if self.theta_steps.is_empty() {
                                for i in 0..nf {
                                    s += sig[i] * d[i];
                                }
                            } else {
                                let th = &self.theta_steps[k * n + off..k * n + off + nf];
                                for i in 0..nf {
                                    s += sig[i] * (d[i] + th[i]);
                                }
                            }
                            if s.abs() >= 1.0 {
                                flagged += 1;
                            }
                            price *= 1.0 + s;
                        }
                    }
                }
                k += 1;
            }
            let value = match self.scheme {
                Scheme::Exponential => {
                    if g == 0 {
                        f0
                    } else {
                        f0 * (self.centering(e, times[g], maturity) + log_sum).exp()
                    }
                }
                Scheme::Euler => price,
            };
            emit(r, value);
        }
        flagged
    }

    fn initial_prices(&self) -> Vec<f64> {
        let mut f0 = vec![0.0; self.n_cells()];
        for r in 0..self.records.len() {
            for j in 0..self.maturities.len() {
                for e in Energy::ALL {
                    f0[self.cell(r, j, e)] = self.curves.get(e).price_at(self.maturity(r, j));
                }
            }
        }
        f0
    }
}

/// Forward prices of one path given its centered increments `dx`
/// (steps × N). The output is indexed `[record][maturity][energy]` with gas
/// before crude.
#[allow(clippy::too_many_arguments)]
pub fn forward_paths_from_increments(
    params: &ModelParams,
    curves: &CurvePair,
    grid: &TimeGrid,
    records: &[usize],
    maturities: &[f64],
    mode: MaturityMode,
    scheme: Scheme,
    measure: MeasureTag,
    dx: &[f64],
) -> Result<Vec<f64>> {
    if dx.len() != grid.n_steps() * params.n_factors() {
        return Err(Error::Dimension("increment buffer does not match the grid".into()));
    }
    let plan = Plan::new(params, curves, grid, maturities, mode, scheme, measure, records)?;
    let mut out = vec![0.0; plan.n_cells()];
    plan.price_path(dx, &mut out);
    Ok(out)
}

/// Output of [`run_paths`] for one chunk of paths.
pub(crate) struct ChunkOutput<T> {
    pub data: T,
    pub flagged: usize,
}

/// Simulates all paths of `config` in fixed-size chunks and hands each
/// chunk's prices (`paths × cells`) to `reduce`. Chunk outputs come back in
/// path order.
pub(crate) fn run_paths<T, R>(
    params: &ModelParams,
    curves: &CurvePair,
    config: &SimConfig,
    grid: &TimeGrid,
    records: &[usize],
    reduce: R,
) -> Result<(Vec<ChunkOutput<T>>, Vec<f64>)>
where
    T: Send,
    R: Fn(&[f64], usize) -> T + Sync,
{
    let plan = Plan::new(
        params,
        curves,
        grid,
        &config.maturities,
        config.mode,
        config.scheme,
        config.measure,
        records,
    )?;
    let n = params.n_factors();
    let steps = grid.n_steps();
    let cells = plan.n_cells();
    let n_chunks = config.paths.div_ceil(CHUNK);
    let out: Result<Vec<ChunkOutput<T>>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(config.paths);
            let mut z = vec![0.0; steps * n];
            let mut dx = vec![0.0; steps * n];
            let mut prices = vec![0.0; (end - start) * cells];
            let mut flagged = 0;
            for p in start..end {
                path_increments(params, config.measure, grid, config.seed, p, &mut z, &mut dx)?;
                let slot = &mut prices[(p - start) * cells..(p - start + 1) * cells];
                flagged += plan.price_path(&dx, slot);
            }
            Ok(ChunkOutput {
                data: reduce(&prices, end - start),
                flagged,
            })
        })
        .collect();
    Ok((out?, plan.initial_prices()))
}

/// Mean and standard error of `F(t,T)/F(0,T)` per recorded cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioMoments {
    pub times: Vec<f64>,
    pub maturities: Vec<f64>,
    pub mode: MaturityMode,
    pub paths: usize,
    /// Indexed `[record][maturity][energy]`.
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub euler_flagged_steps: usize,
}

impl RatioMoments {
    pub fn index(&self, r: usize, j: usize, e: Energy) -> usize {
        (r * self.maturities.len() + j) * 2 + energy_index(e)
    }
}

/// Streams paths into per-cell ratio moments without storing prices.
/// Accumulation is compensated and merged in chunk order, so the result is
/// independent of scheduling.
pub fn simulate_ratio_moments(
    params: &ModelParams,
    curves: &CurvePair,
    config: &SimConfig,
) -> Result<RatioMoments> {
    config.validate()?;
    let grid = config.grid()?;
    let records = config.record_indices(&grid);
    let f0 = {
        let plan = Plan::new(
            params,
            curves,
            &grid,
            &config.maturities,
            config.mode,
            config.scheme,
            config.measure,
            &records,
        )?;
        plan.initial_prices()
    };
    let cells = f0.len();
    let (chunks, _) = run_paths(params, curves, config, &grid, &records, |prices, count| {
        let mut s = vec![CompensatedSum::default(); cells];
        let mut s2 = vec![CompensatedSum::default(); cells];
        for p in 0..count {
            for c in 0..cells {
                let ratio = prices[p * cells + c] / f0[c];
                s[c].add(ratio);
                s2[c].add(ratio * ratio);
            }
        }
        (s, s2)
    })?;
    let mut s = vec![CompensatedSum::default(); cells];
    let mut s2 = vec![CompensatedSum::default(); cells];
    let mut flagged = 0;
    for ch in &chunks {
        for c in 0..cells {
            s[c].merge(&ch.data.0[c]);
            s2[c].merge(&ch.data.1[c]);
        }
        flagged += ch.flagged;
    }
    let np = config.paths as f64;
    let mut mean = vec![0.0; cells];
    let mut se = vec![0.0; cells];
    for c in 0..cells {
        let m = s[c].value() / np;
        let var = if config.paths > 1 {
            ((s2[c].value() - np * m * m) / (np - 1.0)).max(0.0)
        } else {
            0.0
        };
        mean[c] = m;
        se[c] = (var / np).sqrt();
    }
    Ok(RatioMoments {
        times: records.iter().map(|&r| grid.times()[r]).collect(),
        maturities: config.maturities.clone(),
        mode: config.mode,
        paths: config.paths,
        mean,
        std_error: se,
        euler_flagged_steps: flagged,
    })
}
