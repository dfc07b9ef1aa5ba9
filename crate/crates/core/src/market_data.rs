//! Futures quote panels: CSV ingestion with validation, per-contract return
//! panels bucketed by months to delivery, fixed-maturity series and the
//! initial forward curve.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Energy;
use crate::numerics::{Matrix, DAYS_PER_YEAR};

/// Calendar month in which a contract delivers. Delivery is taken to start
/// on the first calendar day of the month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeliveryMonth {
    pub year: i32,
    pub month: u32,
}

impl DeliveryMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Format(format!("invalid month {month}")));
        }
        Ok(Self { year, month })
    }

    pub fn of_date(d: NaiveDate) -> Self {
        Self {
            year: d.year(),
            month: d.month(),
        }
    }

    /// Months since year 0, for month arithmetic.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_ordinal(ord: i64) -> Self {
        Self {
            year: ord.div_euclid(12) as i32,
            month: (ord.rem_euclid(12) + 1) as u32,
        }
    }

    pub fn plus_months(self, k: i64) -> Self {
        Self::from_ordinal(self.ordinal() + k)
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month")
    }
}

impl fmt::Display for DeliveryMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for DeliveryMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| Error::Format(format!("delivery month '{s}' is not YYYY-MM")))?;
        let year: i32 = y
            .parse()
            .map_err(|_| Error::Format(format!("bad year in '{s}'")))?;
        let month: u32 = m
            .parse()
            .map_err(|_| Error::Format(format!("bad month in '{s}'")))?;
        if y.len() != 4 || m.len() != 2 {
            return Err(Error::Format(format!("delivery month '{s}' is not YYYY-MM")));
        }
        Self::new(year, month)
    }
}

/// Year fraction between two dates, ACT/365 fixed.
pub fn year_fraction(from: NaiveDate, to: NaiveDate) -> f64 {
    (to - from).num_days() as f64 / DAYS_PER_YEAR
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuoteRecord {
    pub quote_date: NaiveDate,
    pub delivery_month: DeliveryMonth,
    pub price: f64,
}

impl QuoteRecord {
    /// Reason the record breaks a panel invariant, if any.
    fn invalid_reason(&self) -> Option<String> {
        if !(self.price > 0.0 && self.price.is_finite()) {
            return Some(format!("price must be positive, got {}", self.price));
        }
        if self.quote_date >= self.delivery_month.first_day() {
            return Some(format!(
                "quote date {} is not before delivery month {}",
                self.quote_date, self.delivery_month
            ));
        }
        None
    }
}

/// Validated quotes of one energy, sorted by contract then quote date.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotePanel {
    pub energy: Energy,
    pub unit: String,
    records: Vec<QuoteRecord>,
}

impl QuotePanel {
    pub fn new(energy: Energy, unit: impl Into<String>, mut records: Vec<QuoteRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::NoData(format!("empty {} quote panel", energy.name())));
        }
        if let Some(reason) = records.iter().find_map(QuoteRecord::invalid_reason) {
            return Err(Error::Parameter(reason));
        }
        records.sort_by_key(|r| (r.delivery_month, r.quote_date));
        if let Some(w) = records
            .windows(2)
            .find(|w| w[0].delivery_month == w[1].delivery_month && w[0].quote_date == w[1].quote_date)
        {
            return Err(Error::DuplicateKey {
                date: w[0].quote_date.to_string(),
                month: w[0].delivery_month.to_string(),
            });
        }
        Ok(Self {
            energy,
            unit: unit.into(),
            records,
        })
    }

    pub fn records(&self) -> &[QuoteRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contracts(&self) -> BTreeSet<DeliveryMonth> {
        self.records.iter().map(|r| r.delivery_month).collect()
    }

    pub fn quote_dates(&self) -> BTreeSet<NaiveDate> {
        self.records.iter().map(|r| r.quote_date).collect()
    }

    fn contract_slices(&self) -> impl Iterator<Item = &[QuoteRecord]> {
        self.records
            .chunk_by(|a, b| a.delivery_month == b.delivery_month)
    }
}

/// How to interpret a quote file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteSchema {
    pub energy: Energy,
    /// Free-form unit label, e.g. `p/th` or `$/bbl`.
    pub unit: String,
}

impl QuoteSchema {
    pub fn new(energy: Energy, unit: impl Into<String>) -> Self {
        Self {
            energy,
            unit: unit.into(),
        }
    }
}

/// A data row dropped during loading. Rows are numbered from 1, not counting
/// the header.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedQuotes {
    pub panel: QuotePanel,
    pub rejections: Vec<Rejection>,
}

pub const QUOTE_HEADER: [&str; 3] = ["date", "delivery_month", "price"];

pub fn load_quotes(path: impl AsRef<Path>, schema: &QuoteSchema) -> Result<LoadedQuotes> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_quotes(file, schema)
}

/// Parses a `date,delivery_month,price` CSV. Rows breaking a panel invariant
/// are rejected individually; a repeated `(date, delivery_month)` pair fails
/// the whole load.
pub fn read_quotes<R: Read>(reader: R, schema: &QuoteSchema) -> Result<LoadedQuotes> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Format(format!("cannot read header: {e}")))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols != QUOTE_HEADER {
        return Err(Error::Format(format!(
            "expected header {}, found {}",
            QUOTE_HEADER.join(","),
            cols.join(",")
        )));
    }

    let mut records = Vec::new();
    let mut rejections = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Format(format!("row {row_no}: {e}")))?;
        let parsed = parse_row(&row);
        let rec = match parsed {
            Ok(r) => r,
            Err(reason) => {
                rejections.push(Rejection { row: row_no, reason });
                continue;
            }
        };
        if let Some(reason) = rec.invalid_reason() {
            rejections.push(Rejection { row: row_no, reason });
            continue;
        }
        if !seen.insert((rec.quote_date, rec.delivery_month)) {
            return Err(Error::DuplicateKey {
                date: rec.quote_date.to_string(),
                month: rec.delivery_month.to_string(),
            });
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::NoData(format!(
            "no valid {} quotes ({} rows rejected)",
            schema.energy.name(),
            rejections.len()
        )));
    }
    let panel = QuotePanel::new(schema.energy, schema.unit.clone(), records)?;
    Ok(LoadedQuotes { panel, rejections })
}

fn parse_row(row: &csv::StringRecord) -> std::result::Result<QuoteRecord, String> {
    if row.len() != 3 {
        return Err(format!("expected 3 fields, found {}", row.len()));
    }
    let quote_date = NaiveDate::parse_from_str(&row[0], "%Y-%m-%d")
        .map_err(|_| format!("unparseable date '{}'", &row[0]))?;
    let delivery_month: DeliveryMonth = row[1].parse().map_err(|e: Error| e.to_string())?;
    let price: f64 = row[2]
        .parse()
        .map_err(|_| format!("unparseable price '{}'", &row[2]))?;
    Ok(QuoteRecord {
        quote_date,
        delivery_month,
        price,
    })
}

/// Writes a panel in the input CSV format, ordered by quote date then
/// delivery month.
pub fn write_quotes<W: Write>(panel: &QuotePanel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut rows: Vec<&QuoteRecord> = panel.records.iter().collect();
    rows.sort_by_key(|r| (r.quote_date, r.delivery_month));
    w.write_record(QUOTE_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.quote_date.to_string(),
            r.delivery_month.to_string(),
            format!("{}", r.price),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

pub fn write_rejections<W: Write>(rejections: &[Rejection], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["row", "reason"]).map_err(csv_err)?;
    for r in rejections {
        w.write_record([r.row.to_string(), r.reason.clone()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Simple return of one contract between two consecutive quote dates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractReturn {
    pub delivery_month: DeliveryMonth,
    pub from: NaiveDate,
    pub to: NaiveDate,
    /// Elapsed time in years.
    pub dt: f64,
    /// Time to delivery at `from`, in years.
    pub tenor: f64,
    /// Months to delivery at `from` (1 = next month).
    pub bucket: usize,
    pub value: f64,
}

/// Returns of all contracts sharing the same pair of quote dates.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub dt: f64,
    /// Sorted by bucket.
    pub returns: Vec<ContractReturn>,
}

impl CrossSection {
    pub fn bucket(&self, b: usize) -> Option<&ContractReturn> {
        self.returns.iter().find(|r| r.bucket == b)
    }
}

/// Bound on `|return|` beyond which an observation is reported as suspect.
pub const RETURN_SANITY_BOUND: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct ReturnPanel {
    pub energy: Energy,
    /// Cross-sections in chronological order.
    pub sections: Vec<CrossSection>,
    /// Returns with `|r| >= RETURN_SANITY_BOUND`; kept in `sections`.
    pub violations: Vec<ContractReturn>,
}

impl ReturnPanel {
    pub fn n_returns(&self) -> usize {
        self.sections.iter().map(|s| s.returns.len()).sum()
    }

    pub fn max_bucket(&self) -> usize {
        self.sections
            .iter()
            .flat_map(|s| s.returns.iter().map(|r| r.bucket))
            .max()
            .unwrap_or(0)
    }

    /// Largest `k` such that buckets `1..=k` are all present in at least
    /// half of the cross-sections.
    pub fn common_buckets(&self) -> usize {
        let max = self.max_bucket();
        let half = self.sections.len().div_ceil(2);
        let mut k = 0;
        for b in 1..=max {
            let count = self
                .sections
                .iter()
                .filter(|s| (1..=b).all(|bb| s.bucket(bb).is_some()))
                .count();
            if count >= half.max(1) {
                k = b;
            } else {
                break;
            }
        }
        k
    }

    /// Observation-by-bucket matrix of the cross-sections holding every
    /// bucket `1..=k`, and the mean tenor of each bucket over those rows.
    pub fn bucket_matrix(&self, k: usize) -> (Matrix, Vec<f64>, Vec<usize>) {
        let rows: Vec<usize> = self
            .sections
            .iter()
            .enumerate()
            .filter(|(_, s)| (1..=k).all(|b| s.bucket(b).is_some()))
            .map(|(i, _)| i)
            .collect();
        let mut m = Matrix::zeros(rows.len(), k);
        let mut tenors = vec![0.0; k];
        for (r, &i) in rows.iter().enumerate() {
            for b in 1..=k {
                let ret = self.sections[i].bucket(b).unwrap();
                m[(r, b - 1)] = ret.value;
                tenors[b - 1] += ret.tenor;
            }
        }
        if !rows.is_empty() {
            tenors.iter_mut().for_each(|t| *t /= rows.len() as f64);
        }
        (m, tenors, rows)
    }

    /// Same panel restricted to returns with `|r| < threshold`.
    pub fn without_outliers(&self, threshold: f64) -> (ReturnPanel, Vec<ContractReturn>) {
        let mut dropped = Vec::new();
        let sections = self
            .sections
            .iter()
            .filter_map(|s| {
                let (keep, drop): (Vec<_>, Vec<_>) =
                    s.returns.iter().partition(|r| r.value.abs() < threshold);
                dropped.extend(drop);
                (!keep.is_empty()).then(|| CrossSection {
                    returns: keep,
                    ..s.clone()
                })
            })
            .collect();
        let panel = ReturnPanel {
            energy: self.energy,
            sections,
            violations: self.violations.clone(),
        };
        (panel, dropped)
    }
}

/// Months from the month of `date` to the delivery month.
fn months_to_delivery(date: NaiveDate, m: DeliveryMonth) -> i64 {
    m.ordinal() - DeliveryMonth::of_date(date).ordinal()
}

/// Per-contract simple returns between consecutive quote dates, grouped into
/// cross-sections. A return never spans two delivery months.
pub fn compute_returns(panel: &QuotePanel) -> Result<ReturnPanel> {
    let mut by_dates: BTreeMap<(NaiveDate, NaiveDate), Vec<ContractReturn>> = BTreeMap::new();
    let mut violations = Vec::new();
    for contract in panel.contract_slices() {
        for w in contract.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let value = (b.price - a.price) / a.price;
            let r = ContractReturn {
                delivery_month: a.delivery_month,
                from: a.quote_date,
                to: b.quote_date,
                dt: year_fraction(a.quote_date, b.quote_date),
                tenor: year_fraction(a.quote_date, a.delivery_month.first_day()),
                bucket: months_to_delivery(a.quote_date, a.delivery_month).max(1) as usize,
                value,
            };
            if value.abs() >= RETURN_SANITY_BOUND {
                violations.push(r);
            }
            by_dates.entry((r.from, r.to)).or_default().push(r);
        }
    }
    if by_dates.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no {} contract has two quote dates",
            panel.energy.name()
        )));
    }
    let sections = by_dates
        .into_iter()
        .map(|((from, to), mut returns)| {
            returns.sort_by_key(|r| (r.bucket, r.delivery_month));
            CrossSection {
                from,
                to,
                dt: year_fraction(from, to),
                returns,
            }
        })
        .collect();
    Ok(ReturnPanel {
        energy: panel.energy,
        sections,
        violations,
    })
}

/// Quote history of a single contract.
pub fn fixed_maturity_series(
    panel: &QuotePanel,
    delivery_month: DeliveryMonth,
) -> Result<Vec<(NaiveDate, f64)>> {
    let series: Vec<_> = panel
        .records
        .iter()
        .filter(|r| r.delivery_month == delivery_month)
        .map(|r| (r.quote_date, r.price))
        .collect();
    if series.is_empty() {
        return Err(Error::NotFound(format!(
            "no {} contract delivering {delivery_month}",
            panel.energy.name()
        )));
    }
    Ok(series)
}

/// Initial term structure `F(0, T_j)` of one energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardCurve {
    pub energy: Energy,
    pub valuation_date: NaiveDate,
    /// Years from the valuation date, strictly increasing.
    pub maturities: Vec<f64>,
    pub prices: Vec<f64>,
}

impl ForwardCurve {
    pub fn new(
        energy: Energy,
        valuation_date: NaiveDate,
        maturities: Vec<f64>,
        prices: Vec<f64>,
    ) -> Result<Self> {
        if maturities.is_empty() || maturities.len() != prices.len() {
            return Err(Error::Dimension(format!(
                "curve needs matching non-empty maturities and prices ({} vs {})",
                maturities.len(),
                prices.len()
            )));
        }
        if maturities.windows(2).any(|w| w[1] <= w[0]) || maturities.iter().any(|m| !m.is_finite()) {
            return Err(Error::Parameter("curve maturities must be strictly increasing".into()));
        }
        if prices.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::Parameter("curve prices must be positive".into()));
        }
        Ok(Self {
            energy,
            valuation_date,
            maturities,
            prices,
        })
    }

    /// Flat curve at `price` on the given maturities.
    pub fn flat(energy: Energy, valuation_date: NaiveDate, maturities: Vec<f64>, price: f64) -> Result<Self> {
        let n = maturities.len();
        Self::new(energy, valuation_date, maturities, vec![price; n])
    }

    /// `F(0, T)`: log-linear between quoted maturities, flat beyond either end.
    pub fn price_at(&self, maturity: f64) -> f64 {
        let m = &self.maturities;
        let n = m.len();
        if maturity <= m[0] {
            return self.prices[0];
        }
        if maturity >= m[n - 1] {
            return self.prices[n - 1];
        }
        let j = m.partition_point(|&x| x <= maturity);
        let (t0, t1) = (m[j - 1], m[j]);
        let w = (maturity - t0) / (t1 - t0);
        self.prices[j - 1] * (self.prices[j] / self.prices[j - 1]).powf(w)
    }
}

/// Initial curves of both energies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePair {
    pub gas: ForwardCurve,
    pub crude: ForwardCurve,
}

impl CurvePair {
    pub fn new(gas: ForwardCurve, crude: ForwardCurve) -> Result<Self> {
        if gas.energy != Energy::Gas || crude.energy != Energy::Crude {
            return Err(Error::Parameter("curve pair needs a gas curve and a crude curve".into()));
        }
        Ok(Self { gas, crude })
    }

    pub fn get(&self, e: Energy) -> &ForwardCurve {
        match e {
            Energy::Gas => &self.gas,
            Energy::Crude => &self.crude,
        }
    }
}

/// Curve of every contract quoted on `valuation_date`, with maturities
/// measured to the first day of each delivery month.
pub fn initial_curve(panel: &QuotePanel, valuation_date: NaiveDate) -> Result<ForwardCurve> {
    let mut points: Vec<(f64, f64)> = panel
        .records
        .iter()
        .filter(|r| r.quote_date == valuation_date)
        .map(|r| (year_fraction(valuation_date, r.delivery_month.first_day()), r.price))
        .collect();
    if points.is_empty() {
        return Err(Error::NoData(format!(
            "no {} quotes on {valuation_date}",
            panel.energy.name()
        )));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (maturities, prices) = points.into_iter().unzip();
    ForwardCurve::new(panel.energy, valuation_date, maturities, prices)
}
