//! Probabilistic day-ahead electricity price forecasting: distributional and
//! quantile neural ensembles calibrated with split, quantile-regression and
//! online conformal layers, plus the backtesting and evaluation machinery
//! around them.

pub mod conformal;
pub mod dataset;
pub mod distributions;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod network;
pub mod pipeline;

pub use error::{Error, Result};

/// Delivery hours per day.
pub const HORIZON: usize = 24;
