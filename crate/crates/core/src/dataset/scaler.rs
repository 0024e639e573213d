use std::ops::Range;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::SampleSet;
use crate::error::{ensure, Error, Result};

/// Per-column z-score parameters for features and per-hour targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
}

fn column_stats(m: ArrayView2<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = m.nrows() as f64;
    m.axis_iter(Axis(1))
        .map(|col| {
            let mean = col.sum() / n;
            let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            if lo == hi {
                return (lo, 1.0);
            }
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            (mean, if sd > 0.0 { sd } else { 1.0 })
        })
        .unzip()
}

/// Fit on `rows` only (population standard deviation). Constant columns keep
/// their value as mean and get unit scale.
pub fn fit_scaler(samples: &SampleSet, rows: Range<usize>) -> Result<ScalerState> {
    if rows.is_empty() {
        return Err(Error::Domain("scaler fit rows are empty".into()));
    }
    ensure(rows.end <= samples.len(), || {
        format!("scaler rows {rows:?} exceed {} samples", samples.len())
    })?;
    let (feature_mean, feature_std) = column_stats(samples.features.slice(ndarray::s![rows.clone(), ..]));
    let (target_mean, target_std) = column_stats(samples.targets.slice(ndarray::s![rows, ..]));
    Ok(ScalerState {
        feature_mean,
        feature_std,
        target_mean,
        target_std,
    })
}

fn affine(m: ArrayView2<f64>, mean: &[f64], std: &[f64], forward: bool) -> Result<Array2<f64>> {
    ensure(m.ncols() == mean.len(), || {
        format!("matrix has {} columns, scaler has {}", m.ncols(), mean.len())
    })?;
    let mut out = m.to_owned();
    for mut row in out.rows_mut() {
        for ((v, mu), sd) in row.iter_mut().zip(mean).zip(std) {
            *v = if forward { (*v - mu) / sd } else { *v * sd + mu };
        }
    }
    Ok(out)
}

impl ScalerState {
    pub fn n_features(&self) -> usize {
        self.feature_mean.len()
    }

    pub fn apply_features(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        affine(x, &self.feature_mean, &self.feature_std, true)
    }

    pub fn invert_features(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        affine(z, &self.feature_mean, &self.feature_std, false)
    }

    pub fn apply_targets(&self, y: ArrayView2<f64>) -> Result<Array2<f64>> {
        affine(y, &self.target_mean, &self.target_std, true)
    }

    pub fn invert_targets(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        affine(z, &self.target_mean, &self.target_std, false)
    }

    /// Map an hours × levels quantile matrix from standardized to price units.
    pub fn invert_quantiles(&self, q: ArrayView2<f64>) -> Result<Array2<f64>> {
        ensure(q.nrows() == self.target_mean.len(), || {
            format!(
                "quantile matrix has {} rows, scaler has {} hours",
                q.nrows(),
                self.target_mean.len()
            )
        })?;
        let mut out = q.to_owned();
        for (h, mut row) in out.rows_mut().into_iter().enumerate() {
            let (mu, sd) = (self.target_mean[h], self.target_std[h]);
            row.mapv_inplace(|v| v * sd + mu);
        }
        Ok(out)
    }
}
