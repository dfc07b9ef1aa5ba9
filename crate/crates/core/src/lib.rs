//! Calibration and Monte Carlo simulation of a cointegrated two-energy
//! forward-curve model.
//!
//! Each energy's forward returns are driven by a level/slope/curvature
//! volatility basis applied to a shared latent motion `X`. Under the
//! risk-neutral measure `X` is a Brownian motion, so forwards are martingales.
//! Under the historical measure `X` follows a vector error-correction
//! dynamic `dX = (ΠX + η) dt + Σ dW`, with a deterministic drift `η` chosen so
//! that expected prices stay on the initial curve.

pub mod calibration;
pub mod centering;
pub mod diagnostics;
pub mod error;
pub mod market_data;
pub mod model;
pub mod numerics;
pub mod presets;
pub mod simulation;

pub use error::{Error, ErrorClass, Result};
pub use model::{Energy, MeasureTag, ModelParams, ThetaPrime, VolParams};
