//! Dense numerical kernels shared by the calibration, centering and
//! simulation code. Problems here are small (at most ~20 dimensions), so
//! everything is dense and direct.

mod chol;
mod expm;
mod lsq;
mod nls;
mod pca;
mod quad;

pub use chol::{chol_psd, CholPsd, PSD_TOLERANCE};
pub use expm::expm;
pub use lsq::{
    bic, bic_subset_select, bic_subset_select_max, ols, BicSelection, OlsFit, MAX_SUBSET_COLUMNS,
};
pub use nls::{levenberg_marquardt, nls, LmOptions, LmReport};
pub use pca::{pca, Pca};
pub use quad::{quad_fixed, simpson_nodes};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Days per year used for every date-to-year-fraction conversion (ACT/365 fixed).
pub const DAYS_PER_YEAR: f64 = 365.0;

pub(crate) fn ensure_finite_matrix(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{what} has non-finite entries")))
    }
}

pub(crate) fn ensure_finite_slice(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{what} has non-finite entries")))
    }
}

pub(crate) fn ensure_square(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() == m.ncols() && m.nrows() > 0 {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what} must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another partial sum in; the result depends on the order of
    /// merges, which callers keep fixed.
    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Strictly increasing sequence of times in years.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Parameter("time grid is empty".into()));
        }
        ensure_finite_slice(&times, "time grid")?;
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Parameter(format!(
                "time grid not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Self { times })
    }

    /// Grid `0, dt, 2dt, …` covering `[0, horizon]`. A final partial step is
    /// kept when the horizon is not a multiple of `dt`.
    pub fn uniform(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !(horizon >= dt) || !horizon.is_finite() {
            return Err(Error::Parameter(format!(
                "need dt > 0 and horizon >= dt, got dt={dt}, horizon={horizon}"
            )));
        }
        let ratio = horizon / dt;
        let full = (ratio + 1e-9).floor() as usize;
        let mut times: Vec<f64> = (0..=full).map(|k| k as f64 * dt).collect();
        if (ratio - full as f64).abs() > 1e-9 {
            times.push(horizon);
        } else {
            *times.last_mut().unwrap() = horizon;
        }
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn step(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    pub fn steps(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.windows(2).map(|w| w[1] - w[0])
    }

    /// Index of the grid point closest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) if i >= self.times.len() => self.times.len() - 1,
            Err(i) => {
                if (t - self.times[i - 1]) <= (self.times[i] - t) {
                    i - 1
                } else {
                    i
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1.0);
        for _ in 0..10 {
            s.add(1e-16);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-15).abs() < 1e-30);
        let mut a = CompensatedSum::default();
        a.add(0.5);
        let mut b = CompensatedSum::default();
        b.add(0.25);
        a.merge(&b);
        assert_eq!(a.value(), 0.75);
    }

    #[test]
    fn uniform_grid_hits_horizon() {
        let g = TimeGrid::uniform(2.0, 1.0 / 365.0).unwrap();
        assert_eq!(g.n_steps(), 730);
        assert_eq!(g.end(), 2.0);
        assert!(g.steps().all(|d| d > 0.0));
    }

    #[test]
    fn uniform_grid_partial_last_step() {
        let g = TimeGrid::uniform(1.0, 0.3).unwrap();
        assert_eq!(g.times().len(), 5);
        assert!((g.step(3) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_increasing() {
        assert!(TimeGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![]).is_err());
        assert!(TimeGrid::uniform(0.1, 0.5).is_err());
    }

    #[test]
    fn nearest_index_rounds() {
        let g = TimeGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(g.nearest_index(0.4), 0);
        assert_eq!(g.nearest_index(0.6), 1);
        assert_eq!(g.nearest_index(9.0), 2);
        assert_eq!(g.nearest_index(-1.0), 0);
    }
}
