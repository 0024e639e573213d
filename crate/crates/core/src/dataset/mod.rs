//! Market data ingestion, feature construction, leakage-free scaling and a
//! synthetic series generator with a known quantile oracle.

mod csv_io;
mod features;
mod scaler;
mod synthetic;

pub use csv_io::{parse_market_csv, parse_market_csv_reader, write_market_csv, CsvSchema, TIMESTAMP_FORMAT};
pub use features::{
    build_sample_matrix, encode_weekday, ExogSelector, FeatureSource, FeatureSpec, SampleSet, SourceKind,
};
pub use scaler::{fit_scaler, ScalerState};
pub use synthetic::{generate_synthetic_series, NoiseKind, QuantileOracle, ScaleShift, SyntheticConfig};

use chrono::{Duration, NaiveDateTime};
use ndarray::Array2;

use crate::error::{Error, Result};

/// Hourly price series with aligned exogenous columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    timestamps: Vec<NaiveDateTime>,
    price: Vec<f64>,
    exog: Array2<f64>,
    exog_names: Vec<String>,
}

impl RawSeries {
    /// Validates continuity (1-hour step, no gaps or duplicates), finiteness
    /// and column lengths. `timestamps` must already be sorted.
    pub fn new(
        timestamps: Vec<NaiveDateTime>,
        price: Vec<f64>,
        exog: Array2<f64>,
        exog_names: Vec<String>,
    ) -> Result<Self> {
        let n = timestamps.len();
        if price.len() != n || exog.nrows() != n {
            return Err(Error::Schema(format!(
                "column lengths differ: {n} timestamps, {} prices, {} exogenous rows",
                price.len(),
                exog.nrows()
            )));
        }
        if exog.ncols() != exog_names.len() {
            return Err(Error::Schema("exogenous names do not match columns".into()));
        }
        check_continuity(&timestamps)?;
        if let Some(i) = price.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: i + 2,
                reason: "non-finite price".into(),
            });
        }
        if let Some(((i, _), _)) = exog.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Parse {
                line: i + 2,
                reason: "non-finite exogenous value".into(),
            });
        }
        Ok(Self {
            timestamps,
            price,
            exog,
            exog_names,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn price(&self) -> &[f64] {
        &self.price
    }

    pub fn exog(&self) -> &Array2<f64> {
        &self.exog
    }

    pub fn exog_names(&self) -> &[String] {
        &self.exog_names
    }

    pub fn exog_index(&self, name: &str) -> Option<usize> {
        self.exog_names.iter().position(|n| n == name)
    }
}

fn check_continuity(ts: &[NaiveDateTime]) -> Result<()> {
    for w in ts.windows(2) {
        let step = w[1] - w[0];
        if step == Duration::zero() {
            return Err(Error::Continuity {
                instant: w[1].format(TIMESTAMP_FORMAT).to_string(),
                reason: "duplicate timestamp".into(),
            });
        }
        if step < Duration::zero() {
            return Err(Error::Continuity {
                instant: w[1].format(TIMESTAMP_FORMAT).to_string(),
                reason: "timestamps not increasing".into(),
            });
        }
        if step != Duration::hours(1) {
            let missing = w[0] + Duration::hours(1);
            return Err(Error::Continuity {
                instant: missing.format(TIMESTAMP_FORMAT).to_string(),
                reason: "missing hour".into(),
            });
        }
    }
    Ok(())
}
