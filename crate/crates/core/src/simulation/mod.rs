//! Monte Carlo engine for the motions and the forward curves.
//!
//! Paths simulate the centered motion `X̃ = X − θ`, which follows
//! `dX̃ = ΠX̃ dt + Σ dW` under the historical measure and `dX̃ = Σ dB` under
//! the risk-neutral one. Forward prices are then built either by the Euler
//! product or in exponential form with the deterministic centering factor
//! `exp(∫σθ′)` applied exactly.

mod diagnostics;
mod hamilton;
mod kernel;
mod noise;
mod scenario;
mod synth;

pub use diagnostics::{
    diagnostics, CellStats, ComovementStats, ScenarioDiagnostics, TerminalQuantiles,
};
pub use hamilton::{independent_walks, simulate_hamilton};
pub use kernel::{
    forward_paths_from_increments, motion_increments_from_noise, simulate_motions,
    simulate_ratio_moments, MotionBatch, MotionPath, RatioMoments,
};
pub use noise::{path_rng, standard_normals};
pub use scenario::{simulate_forwards, ScenarioSet, BINARY_MAGIC, BINARY_VERSION};
pub use synth::{synthesize_panels, weekday_calendar, SynthConfig, SynthDataset};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MeasureTag;
use crate::numerics::{TimeGrid, DAYS_PER_YEAR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scheme {
    /// `F_{k+1} = F_k (1 + σ(T − t_k) ΔX_k)`.
    Euler,
    /// `F = F₀ exp(∫σθ′) exp(Σ σ ΔX̃ − ½ Σ |σΣ|² Δt)`.
    Exponential,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "EULER" => Ok(Scheme::Euler),
            "EXPONENTIAL" => Ok(Scheme::Exponential),
            _ => Err(Error::Parameter(format!("unknown scheme '{s}'"))),
        }
    }
}

/// How the entries of [`SimConfig::maturities`] are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaturityMode {
    /// Years from the valuation date; each contract stops evolving at its
    /// maturity and its price is held afterwards.
    FixedMaturity,
    /// Tenors `T − t`; each output time gets its own contract.
    FixedTenor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub measure: MeasureTag,
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub maturities: Vec<f64>,
    pub mode: MaturityMode,
    /// Prices are recorded every this many steps, plus at the horizon.
    pub record_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            measure: MeasureTag::Historical,
            horizon: 3.0,
            dt: 1.0 / DAYS_PER_YEAR,
            paths: 1000,
            seed: 0,
            scheme: Scheme::Exponential,
            maturities: vec![0.25, 0.5, 1.0, 2.0, 3.0],
            mode: MaturityMode::FixedMaturity,
            record_every: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Parameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::Parameter(format!(
                "horizon {} must be at least dt {}",
                self.horizon, self.dt
            )));
        }
        if self.paths == 0 {
            return Err(Error::Parameter("need at least one path".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Parameter("record_every must be at least 1".into()));
        }
        if self.maturities.is_empty()
            || self.maturities.iter().any(|m| !(m.is_finite() && *m >= 0.0))
        {
            return Err(Error::Parameter("maturities must be non-empty and non-negative".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.horizon, self.dt)
    }

    /// Grid indices at which prices are recorded: 0, every `record_every`
    /// steps, and the last point.
    pub fn record_indices(&self, grid: &TimeGrid) -> Vec<usize> {
        let last = grid.len() - 1;
        let mut idx: Vec<usize> = (0..=last).step_by(self.record_every).collect();
        if *idx.last().unwrap() != last {
            idx.push(last);
        }
        idx
    }
}
