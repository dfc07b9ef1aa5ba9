use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use coint_forward::calibration::CalibrationConfig;
use coint_forward::centering::{MomentQuadrature, TenorFan, ThetaFitConfig};
use coint_forward::diagnostics::DEFAULT_RANK_TOLERANCE;
use coint_forward::simulation::{SimConfig, SynthConfig};
use coint_forward::Error;
use serde::{Deserialize, Serialize};

/// Every option of every command. Sections a command does not read are
/// still echoed so a run directory records the complete setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Parameter JSON; the reference parameters are used when absent.
    pub params: Option<PathBuf>,
    pub gas: Option<PathBuf>,
    pub crude: Option<PathBuf>,
    pub synth: SynthConfig,
    pub calibration: CalibrationConfig,
    pub centering: CenteringConfig,
    pub curves: CurvesConfig,
    pub simulation: SimConfig,
    pub validate: ValidateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            params: None,
            gas: None,
            crude: None,
            synth: SynthConfig::default(),
            calibration: CalibrationConfig::default(),
            centering: CenteringConfig::default(),
            curves: CurvesConfig::default(),
            simulation: SimConfig {
                paths: 500,
                record_every: 30,
                ..SimConfig::default()
            },
            validate: ValidateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CenteringConfig {
    pub horizon: f64,
    pub pieces_per_year: usize,
    pub extend_fan: bool,
    pub gas_tenors: Vec<f64>,
    pub crude_tenors: Vec<f64>,
    pub panels: usize,
    /// Fit `θ′` before a historical-measure simulation when the parameters
    /// carry none.
    pub fit_before_simulation: bool,
}

impl Default for CenteringConfig {
    fn default() -> Self {
        let fan = TenorFan::reference();
        let fit = ThetaFitConfig::default();
        Self {
            horizon: fit.horizon,
            pieces_per_year: fit.pieces_per_year,
            extend_fan: fit.extend_fan,
            gas_tenors: fan.gas,
            crude_tenors: fan.crude,
            panels: fit.quadrature.outer_panels,
            fit_before_simulation: true,
        }
    }
}

impl CenteringConfig {
    pub fn fit_config(&self) -> Result<ThetaFitConfig, Error> {
        Ok(ThetaFitConfig {
            horizon: self.horizon,
            pieces_per_year: self.pieces_per_year,
            fan: TenorFan::new(self.gas_tenors.clone(), self.crude_tenors.clone())?,
            extend_fan: self.extend_fan,
            quadrature: self.quadrature(),
            ..ThetaFitConfig::default()
        })
    }

    pub fn quadrature(&self) -> MomentQuadrature {
        MomentQuadrature {
            outer_panels: self.panels,
            inner_panels: self.panels,
        }
    }
}

/// Initial curves for simulation: flat at the given prices, or read from the
/// quote files on a valuation date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesConfig {
    pub from_quotes: bool,
    /// Defaults to the last date quoted for both energies.
    pub valuation_date: Option<NaiveDate>,
    pub flat_valuation_date: NaiveDate,
    pub gas_price: f64,
    pub crude_price: f64,
    pub maturities: Vec<f64>,
}

impl Default for CurvesConfig {
    fn default() -> Self {
        Self {
            from_quotes: false,
            valuation_date: None,
            flat_valuation_date: NaiveDate::from_ymd_opt(2007, 1, 2).unwrap(),
            gas_price: 50.0,
            crude_price: 60.0,
            maturities: (1..=60).map(|m| m as f64 / 12.0).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fixture {
    /// Cointegrated pair; the test should reject.
    Hamilton,
    /// Two independent random walks; the test should not reject.
    Independent,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    pub fixture: Fixture,
    pub fixture_steps: usize,
    pub rank_tolerance: f64,
    /// Calibration report whose reconstructed motion is tested for unit roots.
    pub report: Option<PathBuf>,
    /// Grid of the moment identity check.
    pub identity_times: Vec<f64>,
    pub identity_tenors: Vec<f64>,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            fixture: Fixture::Hamilton,
            fixture_steps: 2000,
            rank_tolerance: DEFAULT_RANK_TOLERANCE,
            report: None,
            identity_times: vec![0.25, 0.5, 1.0, 2.0, 3.0],
            identity_tenors: vec![1.0 / 12.0, 0.5, 1.0],
        }
    }
}

impl RunConfig {
    /// Reads a TOML file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        fix(&mut cfg.params);
        fix(&mut cfg.gas);
        fix(&mut cfg.crude);
        fix(&mut cfg.validate.report);
        Ok(cfg)
    }

    /// Parses TOML layered over [`RunConfig::default`], so a partial section
    /// keeps the command-line defaults of the keys it omits.
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        let mut merged = toml::Table::try_from(Self::default()).map_err(|e| Error::Format(e.to_string()))?;
        merge(&mut merged, user);
        merged.try_into().map_err(|e: toml::de::Error| Error::Format(e.to_string()))
    }

    /// Applies the top-level seed to every seeded section.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.synth.seed = self.seed;
        self.simulation.seed = self.seed;
        self
    }

    pub fn to_toml(&self) -> Result<String, Error> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Overlays `top` on `base`, descending into tables present in both.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
