//! Adaptive-Lasso activation-knot unit root tests.
//!
//! The statistic `tau` is the first penalty value at which the lagged level
//! enters the adaptive Lasso solution path of an ADF regression, scaled by
//! the OLS error variance. This crate computes it with a weighted LARS
//! solver, supplies critical values from a discretised limit functional,
//! and wraps it in a sieve wild bootstrap that stays valid under serial
//! correlation and non-stationary volatility. A Monte Carlo lab reproduces
//! size and local power experiments.

pub mod adf;
pub mod bootstrap;
pub mod data;
pub mod error;
pub mod knot;
pub mod lars;
pub mod limit;
pub mod linalg;
pub mod prng;
pub mod series;
pub mod sim;

pub use error::{Error, Result};
pub use series::{detrend_fd, diff, DetrendSpec, DetrendedSeries, Series};
