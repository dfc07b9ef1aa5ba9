use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use super::kernel::motion_increments_from_noise;
use super::noise::{path_rng, standard_normals};
use crate::error::{Error, Result};
use crate::market_data::{year_fraction, DeliveryMonth, QuotePanel, QuoteRecord};
use crate::model::{stacked_vol_into, Energy, MeasureTag, ModelParams};
use crate::numerics::TimeGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub start: NaiveDate,
    pub years: f64,
    /// Quoted months ahead per energy; the front contract is next month.
    pub gas_contracts: usize,
    pub crude_contracts: usize,
    pub gas_price: f64,
    pub crude_price: f64,
    pub gas_unit: String,
    pub crude_unit: String,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2007, 1, 2).unwrap(),
            years: 5.0,
            gas_contracts: 9,
            crude_contracts: 15,
            gas_price: 50.0,
            crude_price: 60.0,
            gas_unit: "p/therm".into(),
            crude_unit: "USD/bbl".into(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.years > 0.0 && self.years.is_finite()) {
            return Err(Error::Parameter(format!("years must be positive, got {}", self.years)));
        }
        if self.gas_contracts == 0 || self.crude_contracts == 0 {
            return Err(Error::Parameter("each energy needs at least one contract".into()));
        }
        if !(self.gas_price > 0.0 && self.crude_price > 0.0) {
            return Err(Error::Parameter("initial prices must be positive".into()));
        }
        Ok(())
    }

    fn contracts(&self, e: Energy) -> usize {
        match e {
            Energy::Gas => self.gas_contracts,
            Energy::Crude => self.crude_contracts,
        }
    }

    fn price(&self, e: Energy) -> f64 {
        match e {
            Energy::Gas => self.gas_price,
            Energy::Crude => self.crude_price,
        }
    }

    fn unit(&self, e: Energy) -> &str {
        match e {
            Energy::Gas => &self.gas_unit,
            Energy::Crude => &self.crude_unit,
        }
    }
}

/// Model-generated quote panels with the motion that produced them.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub gas: QuotePanel,
    pub crude: QuotePanel,
    pub dates: Vec<NaiveDate>,
    /// `X` at each date (row-major, dates × N), starting from zero.
    pub motion: Vec<f64>,
}

impl SynthDataset {
    pub fn panel(&self, e: Energy) -> &QuotePanel {
        match e {
            Energy::Gas => &self.gas,
            Energy::Crude => &self.crude,
        }
    }
}

/// Weekdays from `start` (inclusive) up to `start + years`.
pub fn weekday_calendar(start: NaiveDate, years: f64) -> Vec<NaiveDate> {
    let end = start + Duration::days((years * 365.0).round() as i64);
    start
        .iter_days()
        .take_while(|d| *d <= end)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .collect()
}

/// Daily quotes of both energies under the historical measure.
///
/// Every contract delivering up to the last date's front months is listed
/// from the first date at the flat initial price and moved by the Euler step
/// `F ← F(1 + σ(T − t)·ΔX)`, with `T` the first day of delivery. Only the
/// configured number of front months is written on each date, so returns are
/// exactly linear in the motion increments.
pub fn synthesize_panels(params: &ModelParams, cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let dates = weekday_calendar(cfg.start, cfg.years);
    if dates.len() < 2 {
        return Err(Error::Parameter("calendar holds fewer than two weekdays".into()));
    }
    let times: Vec<f64> = dates.iter().map(|d| year_fraction(cfg.start, *d)).collect();
    let grid = TimeGrid::new(times.clone())?;
    let n = params.n_factors();
    let steps = grid.n_steps();
    let mut z = vec![0.0; steps * n];
    let mut dx = vec![0.0; steps * n];
    standard_normals(&mut path_rng(cfg.seed, 0), &mut z);
    motion_increments_from_noise(params, MeasureTag::Historical, &grid, &z, &mut dx)?;
    let mut theta = vec![0.0; n];
    for k in 0..steps {
        params.theta_prime.value_into(times[k], &mut theta);
        for i in 0..n {
            dx[k * n + i] += theta[i] * grid.step(k);
        }
    }
    let mut motion = vec![0.0; (steps + 1) * n];
    for k in 0..steps {
        for i in 0..n {
            motion[(k + 1) * n + i] = motion[k * n + i] + dx[k * n + i];
        }
    }

    let first = DeliveryMonth::of_date(dates[0]);
    let last = DeliveryMonth::of_date(*dates.last().unwrap());
    let mut row = vec![0.0; n];
    let mut panels = Vec::with_capacity(2);
    for e in Energy::ALL {
        let k_front = cfg.contracts(e) as i64;
        let mut records = Vec::new();
        for ord in first.ordinal() + 1..=last.ordinal() + k_front {
            let m = DeliveryMonth::from_ordinal(ord);
            let delivery = year_fraction(cfg.start, m.first_day());
            let mut price = cfg.price(e);
            for (k, d) in dates.iter().enumerate() {
                if *d >= m.first_day() {
                    break;
                }
                if k > 0 {
                    stacked_vol_into(e, delivery - times[k - 1], &params.vol, &mut row);
                    let r: f64 = (0..n).map(|i| row[i] * dx[(k - 1) * n + i]).sum();
                    price *= 1.0 + r;
                    if !(price > 0.0 && price.is_finite()) {
                        return Err(Error::Numerical(format!(
                            "synthetic {} price for {m} left the positive range on {d}",
                            e.name()
                        )));
                    }
                }
                let bucket = ord - DeliveryMonth::of_date(*d).ordinal();
                if (1..=k_front).contains(&bucket) {
                    records.push(QuoteRecord {
                        quote_date: *d,
                        delivery_month: m,
                        price,
                    });
                }
            }
        }
        panels.push(QuotePanel::new(e, cfg.unit(e), records)?);
    }
    let crude = panels.pop().unwrap();
    let gas = panels.pop().unwrap();
    Ok(SynthDataset {
        gas,
        crude,
        dates,
        motion,
    })
}
