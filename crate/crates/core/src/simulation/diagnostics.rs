use serde::{Deserialize, Serialize};

use super::scenario::ScenarioSet;
use crate::error::{Error, Result};
use crate::model::Energy;
use crate::numerics::CompensatedSum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub t: f64,
    #[serde(rename = "T")]
    pub maturity: f64,
    pub energy: Energy,
    /// Mean of `F(t,T)/F(0,T)`.
    pub mean_ratio: f64,
    pub std_ratio: f64,
    pub std_error: f64,
    /// `mean_ratio − 1`.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalQuantiles {
    #[serde(rename = "T")]
    pub maturity: f64,
    pub energy: Energy,
    pub levels: Vec<f64>,
    /// Quantiles of the terminal price ratio at `levels`.
    pub values: Vec<f64>,
}

/// Co-movement of the two energies on the first configured maturity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComovementStats {
    /// Correlation across paths of the log-price change over the horizon.
    pub log_change_correlation: Option<f64>,
    /// Sample variance over time of the gas-minus-crude log spread,
    /// averaged over paths.
    pub mean_spread_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDiagnostics {
    pub paths: usize,
    pub cells: Vec<CellStats>,
    pub max_abs_deviation: f64,
    /// Largest `|deviation| / std_error` over cells with positive error.
    pub max_deviation_in_std_errors: f64,
    pub terminal_quantiles: Vec<TerminalQuantiles>,
    pub comovement: ComovementStats,
    pub euler_flagged_steps: usize,
}

pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Empirical quantile by linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = CompensatedSum::default();
    let mut saa = CompensatedSum::default();
    let mut sbb = CompensatedSum::default();
    for (x, y) in a.iter().zip(b) {
        sab.add((x - ma) * (y - mb));
        saa.add((x - ma) * (x - ma));
        sbb.add((y - mb) * (y - mb));
    }
    let d = (saa.value() * sbb.value()).sqrt();
    (d > 0.0).then(|| sab.value() / d)
}

/// Summary statistics of a scenario set. Sums are compensated and taken in
/// path order, so the report is reproducible.
pub fn diagnostics(s: &ScenarioSet) -> Result<ScenarioDiagnostics> {
    let np = s.n_paths();
    if np == 0 || s.prices.is_empty() {
        return Err(Error::NoData("empty scenario set".into()));
    }
    let mut cells = Vec::with_capacity(s.cells());
    let mut max_dev: f64 = 0.0;
    let mut max_se: f64 = 0.0;
    for r in 0..s.n_times() {
        for j in 0..s.n_maturities() {
            for e in Energy::ALL {
                let c = s.cell(r, j, e);
                let f0 = s.initial[c];
                let mut sum = CompensatedSum::default();
                let mut sq = CompensatedSum::default();
                for p in 0..np {
                    let x = s.prices[p * s.cells() + c] / f0;
                    sum.add(x);
                    sq.add(x * x);
                }
                let mean = sum.value() / np as f64;
                let var = if np > 1 {
                    ((sq.value() - np as f64 * mean * mean) / (np as f64 - 1.0)).max(0.0)
                } else {
                    0.0
                };
                let se = (var / np as f64).sqrt();
                let dev = mean - 1.0;
                max_dev = max_dev.max(dev.abs());
                if se > 0.0 {
                    max_se = max_se.max(dev.abs() / se);
                }
                cells.push(CellStats {
                    t: s.times[r],
                    maturity: s.maturity(r, j),
                    energy: e,
                    mean_ratio: mean,
                    std_ratio: var.sqrt(),
                    std_error: se,
                    deviation: dev,
                });
            }
        }
    }

    let last = s.n_times() - 1;
    let mut terminal = Vec::new();
    for j in 0..s.n_maturities() {
        for e in Energy::ALL {
            let c = s.cell(last, j, e);
            let mut v: Vec<f64> = (0..np).map(|p| s.prices[p * s.cells() + c] / s.initial[c]).collect();
            v.sort_by(f64::total_cmp);
            terminal.push(TerminalQuantiles {
                maturity: s.maturity(last, j),
                energy: e,
                levels: QUANTILE_LEVELS.to_vec(),
                values: QUANTILE_LEVELS.iter().map(|&q| quantile(&v, q)).collect(),
            });
        }
    }

    let log_change = |e: Energy| -> Vec<f64> {
        (0..np)
            .map(|p| (s.price(p, last, 0, e) / s.price(p, 0, 0, e)).ln())
            .collect()
    };
    let log_change_correlation = if np > 2 {
        correlation(&log_change(Energy::Gas), &log_change(Energy::Crude))
    } else {
        None
    };
    let mut spread_var = CompensatedSum::default();
    for p in 0..np {
        let spread: Vec<f64> = (0..s.n_times())
            .map(|r| s.price(p, r, 0, Energy::Gas).ln() - s.price(p, r, 0, Energy::Crude).ln())
            .collect();
        let m = spread.iter().sum::<f64>() / spread.len() as f64;
        let v = spread.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / spread.len() as f64;
        spread_var.add(v);
    }

    Ok(ScenarioDiagnostics {
        paths: np,
        cells,
        max_abs_deviation: max_dev,
        max_deviation_in_std_errors: max_se,
        terminal_quantiles: terminal,
        comovement: ComovementStats {
            log_change_correlation,
            mean_spread_variance: spread_var.value() / np as f64,
        },
        euler_flagged_steps: s.euler_flagged_steps,
    })
}
