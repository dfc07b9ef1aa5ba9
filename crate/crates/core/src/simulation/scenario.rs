use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::kernel::run_paths;
use super::{MaturityMode, SimConfig};
use crate::error::{Error, Result};
use crate::market_data::CurvePair;
use crate::model::{Energy, ModelParams};

/// First bytes of the binary scenario format.
pub const BINARY_MAGIC: [u8; 8] = *b"CFSCEN\0\0";
pub const BINARY_VERSION: u32 = 1;

/// Simulated forward prices indexed `[path][time][maturity][energy]`,
/// energies ordered gas then crude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub config: SimConfig,
    /// SHA-256 of the parameter JSON document.
    pub params_digest: String,
    pub times: Vec<f64>,
    /// Initial prices `F(0, T)` per `[time][maturity][energy]` cell.
    pub initial: Vec<f64>,
    pub prices: Vec<f64>,
    /// Euler steps with `|σΔX| ≥ 1`, where a price may turn negative.
    pub euler_flagged_steps: usize,
}

impl ScenarioSet {
    pub fn n_paths(&self) -> usize {
        self.config.paths
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_maturities(&self) -> usize {
        self.config.maturities.len()
    }

    pub fn cells(&self) -> usize {
        self.n_times() * self.n_maturities() * 2
    }

    pub fn cell(&self, r: usize, j: usize, e: Energy) -> usize {
        (r * self.n_maturities() + j) * 2 + if e == Energy::Gas { 0 } else { 1 }
    }

    pub fn price(&self, path: usize, r: usize, j: usize, e: Energy) -> f64 {
        self.prices[path * self.cells() + self.cell(r, j, e)]
    }

    /// Delivery time of cell `(r, j)` in years from valuation.
    pub fn maturity(&self, r: usize, j: usize) -> f64 {
        match self.config.mode {
            MaturityMode::FixedMaturity => self.config.maturities[j],
            MaturityMode::FixedTenor => self.times[r] + self.config.maturities[j],
        }
    }

    /// Long CSV: `path,t,T,energy,price`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let fmt = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["path", "t", "T", "energy", "price"]).map_err(fmt)?;
        for p in 0..self.n_paths() {
            for r in 0..self.n_times() {
                for j in 0..self.n_maturities() {
                    for e in Energy::ALL {
                        w.write_record([
                            p.to_string(),
                            self.times[r].to_string(),
                            self.maturity(r, j).to_string(),
                            e.tag().to_string(),
                            self.price(p, r, j, e).to_string(),
                        ])
                        .map_err(fmt)?;
                    }
                }
            }
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))?;
        Ok(())
    }

    /// Binary layout, little-endian: magic (8 bytes), version `u32`, then
    /// `u64` counts of paths, times, maturities and energies, the `f64`
    /// times, the `f64` maturity entries of the config, and the prices as
    /// row-major `f64` in `[path][time][maturity][energy]` order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Format(e.to_string());
        w.write_all(&BINARY_MAGIC).map_err(io)?;
        w.write_all(&BINARY_VERSION.to_le_bytes()).map_err(io)?;
        for d in [self.n_paths(), self.n_times(), self.n_maturities(), 2] {
            w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
        }
        for x in self.times.iter().chain(&self.config.maturities).chain(&self.prices) {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)?;
        Ok(())
    }

    /// Reads the prices and shape back from [`Self::write_binary`] output.
    pub fn read_binary(bytes: &[u8]) -> Result<(Vec<usize>, Vec<f64>, Vec<f64>, Vec<f64>)> {
        let bad = || Error::Format("truncated or corrupt scenario file".into());
        if bytes.len() < 44 || bytes[..8] != BINARY_MAGIC {
            return Err(Error::Format("not a scenario file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != BINARY_VERSION {
            return Err(Error::Format(format!("unsupported scenario version {version}")));
        }
        let dims: Vec<usize> = (0..4)
            .map(|i| u64::from_le_bytes(bytes[12 + 8 * i..20 + 8 * i].try_into().unwrap()) as usize)
            .collect();
        let floats: Vec<f64> = bytes[44..]
            .chunks(8)
            .map(|c| c.try_into().map(f64::from_le_bytes).map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let total = dims[1] + dims[2] + dims.iter().product::<usize>();
        if floats.len() != total {
            return Err(bad());
        }
        let times = floats[..dims[1]].to_vec();
        let mats = floats[dims[1]..dims[1] + dims[2]].to_vec();
        let prices = floats[dims[1] + dims[2]..].to_vec();
        Ok((dims, times, mats, prices))
    }
}

pub(crate) fn params_digest(params: &ModelParams) -> Result<String> {
    let json = params.to_json()?;
    let hash = Sha256::digest(json.as_bytes());
    Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
}

/// Simulates and stores every recorded price of every path.
pub fn simulate_forwards(
    params: &ModelParams,
    curves: &CurvePair,
    config: &SimConfig,
) -> Result<ScenarioSet> {
    config.validate()?;
    let grid = config.grid()?;
    let records = config.record_indices(&grid);
    let (chunks, initial) = run_paths(params, curves, config, &grid, &records, |p, _| p.to_vec())?;
    let mut prices = Vec::with_capacity(config.paths * initial.len());
    let mut flagged = 0;
    for ch in chunks {
        prices.extend_from_slice(&ch.data);
        flagged += ch.flagged;
    }
    if prices.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(
            "simulation produced non-finite prices".into(),
        ));
    }
    Ok(ScenarioSet {
        config: config.clone(),
        params_digest: params_digest(params)?,
        times: records.iter().map(|&r| grid.times()[r]).collect(),
        initial,
        prices,
        euler_flagged_steps: flagged,
    })
}
