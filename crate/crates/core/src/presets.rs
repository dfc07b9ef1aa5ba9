//! Reference parameter set estimated on ICE natural gas and Brent futures
//! (September 2003 to April 2007), three factors per energy.

use crate::model::{EnergyVol, ModelParams, VolParams};
use crate::numerics::Matrix;

pub const GAS_TAU1: f64 = 0.736;
pub const GAS_TAU2: f64 = 0.086;
pub const CRUDE_TAU1: f64 = 3.761;
pub const CRUDE_TAU2: f64 = 0.138;

#[rustfmt::skip]
const PI: [f64; 36] = [
    -0.017,  0.0,    0.0,    0.019, 0.0,    0.0,
     0.0,   -0.005,  0.009, -0.027, 0.0,   -0.162,
     0.0,    0.0,   -0.012,  0.0,   0.0,    0.174,
     0.0,    0.0,    0.0,   -0.009, 0.0,   -0.030,
     0.0,    0.0,    0.0,    0.015, 0.008,  0.046,
     0.0,    0.0,    0.0,   -0.017, 0.019, -0.052,
];

#[rustfmt::skip]
const SIGMA_SIGMA_T: [f64; 36] = [
     0.00158, -0.00323,  0.00386, -0.00001,  0.00006,  0.00003,
    -0.00323,  0.00812, -0.00958, -0.00007,  0.00007, -0.00007,
     0.00386, -0.00958,  0.01740,  0.00006, -0.00003,  0.00011,
    -0.00001, -0.00007,  0.00006,  0.00045, -0.00052,  0.00010,
     0.00006,  0.00007, -0.00003, -0.00052,  0.00096, -0.00011,
     0.00003, -0.00007,  0.00011,  0.00010, -0.00011,  0.00015,
];

pub fn reference_vol() -> VolParams {
    VolParams {
        gas: EnergyVol::new(3, GAS_TAU1, GAS_TAU2),
        crude: EnergyVol::new(3, CRUDE_TAU1, CRUDE_TAU2),
    }
}

pub fn reference_pi() -> Matrix {
    Matrix::from_row_slice(6, 6, &PI)
}

/// Covariance of the motion increments exactly as tabulated.
pub fn reference_sigma_sigma_t() -> Matrix {
    Matrix::from_row_slice(6, 6, &SIGMA_SIGMA_T)
}

/// Factor by which the tabulated covariance is multiplied to obtain a
/// per-year covariance: the table is read as a daily covariance and
/// annualized over trading days.
pub const COVARIANCE_ANNUALIZATION: f64 = 252.0;

/// Reference parameters in per-year units, with `θ′ ≡ 0`.
pub fn reference_params() -> ModelParams {
    ModelParams::new(
        reference_vol(),
        reference_pi(),
        reference_sigma_sigma_t() * COVARIANCE_ANNUALIZATION,
    )
    .expect("reference parameters are valid")
}

/// Reference parameters taking the tabulated covariance literally as a
/// per-year covariance.
pub fn reference_params_tabulated() -> ModelParams {
    ModelParams::new(reference_vol(), reference_pi(), reference_sigma_sigma_t())
        .expect("reference parameters are valid")
}
