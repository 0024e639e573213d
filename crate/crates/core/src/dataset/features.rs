//! Conditioning-set construction.
//!
//! Feature layout per sample, frozen so that stored models stay portable:
//!
//! 1. price lags, oldest first (largest lag offset first);
//! 2. exogenous blocks in `FeatureSpec::exog` order; within a selector, the
//!    24-hour day blocks in listed order, then the single last-hour values;
//! 3. the weekday `[sin, cos]` pair, if enabled.

use std::f64::consts::PI;

use chrono::{Datelike, NaiveDate, Timelike};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::RawSeries;
use crate::error::{ensure, Error, Result};
use crate::HORIZON;

/// Exogenous values taken from one column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExogSelector {
    pub column: String,
    /// Day offsets (0 = delivery day) whose 24 hourly values are included.
    #[serde(default)]
    pub days: Vec<usize>,
    /// Day offsets whose last hour alone is included (e.g. a daily gas close).
    #[serde(default)]
    pub last_value_days: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSpec {
    /// Hourly lag offsets counted back from the delivery day's first hour.
    pub price_lags: Vec<usize>,
    pub exog: Vec<ExogSelector>,
    pub include_weekday: bool,
    /// Divisor inside the weekday sin/cos. 6 is the default encoding, under
    /// which Monday and Sunday coincide; 7 is the periodic one.
    pub weekday_divisor: u32,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            price_lags: (1..=48).collect(),
            exog: Vec::new(),
            include_weekday: true,
            weekday_divisor: 6,
        }
    }
}

impl FeatureSpec {
    /// Two days of price lags, day-ahead load, renewables for day t and t−1,
    /// the gas close of day t−2 and the weekday.
    pub fn german(load: &str, renewables: &str, gas: &str) -> Self {
        Self {
            price_lags: (1..=48).collect(),
            exog: vec![
                ExogSelector {
                    column: load.into(),
                    days: vec![0],
                    last_value_days: vec![],
                },
                ExogSelector {
                    column: renewables.into(),
                    days: vec![0, 1],
                    last_value_days: vec![],
                },
                ExogSelector {
                    column: gas.into(),
                    days: vec![],
                    last_value_days: vec![2],
                },
            ],
            include_weekday: true,
            weekday_divisor: 6,
        }
    }

    /// Seven days of price lags, day-ahead load and wind, weekday.
    pub fn italian(load: &str, wind: &str) -> Self {
        Self {
            price_lags: (1..=168).collect(),
            exog: vec![
                ExogSelector {
                    column: load.into(),
                    days: vec![0],
                    last_value_days: vec![],
                },
                ExogSelector {
                    column: wind.into(),
                    days: vec![0],
                    last_value_days: vec![],
                },
            ],
            include_weekday: true,
            weekday_divisor: 6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.price_lags.iter().any(|&l| l == 0) {
            return Err(Error::Domain("price lags must be positive".into()));
        }
        if self.weekday_divisor == 0 {
            return Err(Error::Domain("weekday divisor must be positive".into()));
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.price_lags.len()
            + self
                .exog
                .iter()
                .map(|s| s.days.len() * HORIZON + s.last_value_days.len())
                .sum::<usize>()
            + if self.include_weekday { 2 } else { 0 }
    }

    /// Provenance of each feature column.
    pub fn layout(&self) -> Vec<FeatureSource> {
        let mut lags = self.price_lags.clone();
        lags.sort_unstable_by(|a, b| b.cmp(a));
        let mut out: Vec<FeatureSource> = lags
            .iter()
            .map(|&l| FeatureSource {
                kind: SourceKind::Price,
                hour_offset: -(l as i64),
            })
            .collect();
        for (j, sel) in self.exog.iter().enumerate() {
            for &d in &sel.days {
                for h in 0..HORIZON {
                    out.push(FeatureSource {
                        kind: SourceKind::Exog(j),
                        hour_offset: h as i64 - 24 * d as i64,
                    });
                }
            }
            for &d in &sel.last_value_days {
                out.push(FeatureSource {
                    kind: SourceKind::Exog(j),
                    hour_offset: 23 - 24 * d as i64,
                });
            }
        }
        if self.include_weekday {
            for _ in 0..2 {
                out.push(FeatureSource {
                    kind: SourceKind::Weekday,
                    hour_offset: 0,
                });
            }
        }
        out
    }

    /// Hours of history needed before a delivery day's first hour.
    fn history_hours(&self) -> usize {
        let lag = self.price_lags.iter().copied().max().unwrap_or(0);
        let exog = self
            .exog
            .iter()
            .flat_map(|s| {
                s.days
                    .iter()
                    .map(|&d| 24 * d)
                    .chain(s.last_value_days.iter().map(|&d| (24 * d).saturating_sub(23)))
            })
            .max()
            .unwrap_or(0);
        lag.max(exog)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceKind {
    Price,
    /// Index into `FeatureSpec::exog`.
    Exog(usize),
    Weekday,
}

/// Where a feature value comes from, relative to the delivery day's first hour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSource {
    pub kind: SourceKind,
    pub hour_offset: i64,
}

/// `[sin(2πd/divisor), cos(2πd/divisor)]` for weekday index `d ∈ [0, 6]` (Monday = 0).
pub fn encode_weekday(d: u32, divisor: u32) -> Result<[f64; 2]> {
    if d > 6 {
        return Err(Error::Domain(format!("weekday index {d} outside [0, 6]")));
    }
    if divisor == 0 {
        return Err(Error::Domain("weekday divisor must be positive".into()));
    }
    let angle = 2.0 * PI * d as f64 / divisor as f64;
    Ok([angle.sin(), angle.cos()])
}

/// Feature rows paired with 24-hour day-ahead targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub features: Array2<f64>,
    pub targets: Array2<f64>,
    pub dates: Vec<NaiveDate>,
    pub layout: Vec<FeatureSource>,
}

impl SampleSet {
    pub fn new(
        features: Array2<f64>,
        targets: Array2<f64>,
        dates: Vec<NaiveDate>,
        layout: Vec<FeatureSource>,
    ) -> Result<Self> {
        ensure(
            features.nrows() == targets.nrows() && targets.nrows() == dates.len(),
            || "sample set row counts differ".into(),
        )?;
        ensure(targets.ncols() == HORIZON, || {
            format!("targets must have {HORIZON} columns")
        })?;
        ensure(layout.len() == features.ncols(), || {
            "layout does not match feature columns".into()
        })?;
        Ok(Self {
            features,
            targets,
            dates,
            layout,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Every price feature predates the delivery day; exogenous values may
    /// come from the delivery day itself (day-ahead forecasts).
    pub fn check_no_leakage(&self) -> Result<()> {
        for (i, src) in self.layout.iter().enumerate() {
            let ok = match src.kind {
                SourceKind::Price => src.hour_offset < 0,
                SourceKind::Exog(_) => src.hour_offset < HORIZON as i64,
                SourceKind::Weekday => true,
            };
            if !ok {
                return Err(Error::Domain(format!(
                    "feature {i} ({:?}) reads hour offset {}",
                    src.kind, src.hour_offset
                )));
            }
        }
        Ok(())
    }
}

/// One sample per delivery date. `dates` restricts to an inclusive range;
/// `None` takes every day with enough history and a complete target day.
pub fn build_sample_matrix(
    raw: &RawSeries,
    spec: &FeatureSpec,
    dates: Option<(NaiveDate, NaiveDate)>,
) -> Result<SampleSet> {
    spec.validate()?;
    let exog_cols = spec
        .exog
        .iter()
        .map(|s| {
            raw.exog_index(&s.column)
                .ok_or_else(|| Error::Schema(format!("feature spec references unknown column `{}`", s.column)))
        })
        .collect::<Result<Vec<_>>>()?;
    if raw.is_empty() {
        return Err(Error::Coverage("empty series".into()));
    }
    let ts = raw.timestamps();
    let first_midnight = (24 - ts[0].hour() as usize) % 24;
    let n = raw.len();
    let history = spec.history_hours();

    let day_start = |date: NaiveDate| -> Option<usize> {
        let first_day = (ts[0] + chrono::Duration::hours(first_midnight as i64)).date();
        let k = (date - first_day).num_days();
        (k >= 0).then(|| first_midnight + 24 * k as usize)
    };

    let candidate_days: Vec<NaiveDate> = match dates {
        Some((from, to)) => {
            if from > to {
                return Err(Error::Domain(format!("empty date range {from}..{to}")));
            }
            from.iter_days().take_while(|d| *d <= to).collect()
        }
        None => {
            let mut out = Vec::new();
            let mut start = first_midnight;
            while start + HORIZON <= n {
                if start >= history {
                    out.push(ts[start].date());
                }
                start += HORIZON;
            }
            out
        }
    };

    let layout = spec.layout();
    let n_x = layout.len();
    let mut features = Array2::<f64>::zeros((candidate_days.len(), n_x));
    let mut targets = Array2::<f64>::zeros((candidate_days.len(), HORIZON));
    let price = raw.price();
    let exog = raw.exog();

    for (row, &date) in candidate_days.iter().enumerate() {
        let start = day_start(date)
            .filter(|&s| s >= history && s + HORIZON <= n)
            .ok_or_else(|| Error::Coverage(format!("insufficient history or data for delivery date {date}")))?;
        for (col, src) in layout.iter().enumerate() {
            let idx = (start as i64 + src.hour_offset) as usize;
            features[[row, col]] = match src.kind {
                SourceKind::Price => price[idx],
                SourceKind::Exog(j) => exog[[idx, exog_cols[j]]],
                SourceKind::Weekday => 0.0,
            };
        }
        if spec.include_weekday {
            let wd = encode_weekday(date.weekday().num_days_from_monday(), spec.weekday_divisor)?;
            features[[row, n_x - 2]] = wd[0];
            features[[row, n_x - 1]] = wd[1];
        }
        for h in 0..HORIZON {
            targets[[row, h]] = price[start + h];
        }
    }
    SampleSet::new(features, targets, candidate_days, layout)
}
