//! Combining ensemble members into one non-crossing quantile matrix.

use chrono::NaiveDate;
use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::DistParams;
use crate::error::{ensure, Error, Result};
use crate::HORIZON;

/// Quantile levels predicted by the ensemble: strictly increasing, symmetric
/// about the median, with 0.5 always present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantileGrid {
    levels: Vec<f64>,
}

/// A balanced pair of levels `(α/2, 1 − α/2)` forming a central PI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaPair {
    pub alpha: f64,
    pub lower: usize,
    pub upper: usize,
}

impl QuantileGrid {
    const SYMMETRY_TOL: f64 = 1e-9;

    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Domain("quantile grid is empty".into()));
        }
        if levels.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            return Err(Error::Domain("quantile levels must lie in (0, 1)".into()));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("quantile levels must be strictly increasing".into()));
        }
        let n = levels.len();
        for i in 0..n {
            if (levels[i] + levels[n - 1 - i] - 1.0).abs() > Self::SYMMETRY_TOL {
                return Err(Error::Domain(format!(
                    "quantile grid not symmetric: {} has no partner",
                    levels[i]
                )));
            }
        }
        if n % 2 == 0 {
            return Err(Error::Domain("quantile grid must contain the median 0.5".into()));
        }
        Ok(Self { levels })
    }

    /// The nine deciles 0.1, …, 0.9.
    pub fn deciles() -> Self {
        Self::new((1..=9).map(|i| i as f64 / 10.0).collect()).expect("valid grid")
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn median_index(&self) -> usize {
        self.levels.len() / 2
    }

    /// Central PIs from widest to narrowest, e.g. α = 0.2, 0.4, 0.6, 0.8 for deciles.
    pub fn pairs(&self) -> Vec<AlphaPair> {
        let n = self.levels.len();
        (0..n / 2)
            .map(|i| AlphaPair {
                alpha: 2.0 * self.levels[i],
                lower: i,
                upper: n - 1 - i,
            })
            .collect()
    }

    /// Column label such as `q010` for level 0.1.
    pub fn label(&self, idx: usize) -> String {
        format!("q{:03}", (self.levels[idx] * 100.0).round() as i64)
    }
}

impl Default for QuantileGrid {
    fn default() -> Self {
        Self::deciles()
    }
}

impl TryFrom<Vec<f64>> for QuantileGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<QuantileGrid> for Vec<f64> {
    fn from(g: QuantileGrid) -> Self {
        g.levels
    }
}

/// Predicted quantiles for one delivery day: rows are hours, columns levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileForecast {
    pub delivery_date: NaiveDate,
    pub q: Array2<f64>,
}

impl QuantileForecast {
    pub fn new(delivery_date: NaiveDate, q: Array2<f64>) -> Self {
        Self { delivery_date, q }
    }

    pub fn is_non_crossing(&self) -> bool {
        is_non_crossing(self.q.view())
    }
}

pub fn is_non_crossing(q: ArrayView2<f64>) -> bool {
    q.rows()
        .into_iter()
        .all(|r| r.iter().zip(r.iter().skip(1)).all(|(a, b)| a <= b))
}

/// Sort every hour-row ascending.
pub fn sort_quantiles(q_raw: &Array2<f64>) -> Array2<f64> {
    let mut q = q_raw.clone();
    sort_quantiles_in_place(&mut q);
    q
}

pub fn sort_quantiles_in_place(q: &mut Array2<f64>) {
    for mut row in q.rows_mut() {
        let mut v = row.to_vec();
        v.sort_by(f64::total_cmp);
        row.iter_mut().zip(v).for_each(|(dst, src)| *dst = src);
    }
}

/// Uniform vincentization: entrywise mean of the members' quantile matrices.
pub fn vincentize(members: &[Array2<f64>]) -> Result<Array2<f64>> {
    let first = members
        .first()
        .ok_or_else(|| Error::Contract("vincentize needs at least one member".into()))?;
    let mut acc = Array2::<f64>::zeros(first.raw_dim());
    for m in members {
        ensure(m.raw_dim() == first.raw_dim(), || {
            format!("member shape {:?} differs from {:?}", m.shape(), first.shape())
        })?;
        acc += m;
    }
    acc /= members.len() as f64;
    Ok(acc)
}

/// Equal-weight mean of member point forecasts.
pub fn mean_point(members: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = members
        .first()
        .ok_or_else(|| Error::Contract("mean_point needs at least one member".into()))?;
    let mut acc = vec![0.0; first.len()];
    for m in members {
        ensure(m.len() == first.len(), || "point forecasts differ in length".into())?;
        acc.iter_mut().zip(m).for_each(|(a, v)| *a += v);
    }
    let n = members.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// How distributional heads are turned into quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExtractionMode {
    Analytic,
    MonteCarlo { n_samples: usize, seed: u64 },
}

impl Default for ExtractionMode {
    fn default() -> Self {
        ExtractionMode::Analytic
    }
}

/// Type-7 empirical quantile (linear interpolation between order statistics)
/// of an ascending slice.
pub fn empirical_quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (n - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Build an `H × Γ` quantile matrix from per-hour distribution parameters.
pub fn dist_to_quantiles(params: &[DistParams], grid: &QuantileGrid, mode: ExtractionMode) -> Result<Array2<f64>> {
    ensure(params.len() == HORIZON, || {
        format!("expected {HORIZON} hourly parameter sets, got {}", params.len())
    })?;
    let mut q = Array2::<f64>::zeros((HORIZON, grid.len()));
    match mode {
        ExtractionMode::Analytic => {
            for (h, d) in params.iter().enumerate() {
                for (k, &lvl) in grid.levels().iter().enumerate() {
                    q[[h, k]] = d.quantile(lvl)?;
                }
            }
        }
        ExtractionMode::MonteCarlo { n_samples, seed } => {
            if n_samples == 0 {
                return Err(Error::Domain("monte carlo extraction needs samples".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draws = vec![0.0; n_samples];
            for (h, d) in params.iter().enumerate() {
                draws.iter_mut().for_each(|v| *v = d.sample(&mut rng));
                draws.sort_by(f64::total_cmp);
                for (k, &lvl) in grid.levels().iter().enumerate() {
                    q[[h, k]] = empirical_quantile_sorted(&draws, lvl);
                }
            }
        }
    }
    Ok(q)
}

/// The 0.5-level column, one value per hour.
pub fn median_column(q: &Array2<f64>, grid: &QuantileGrid) -> Vec<f64> {
    q.index_axis(Axis(1), grid.median_index()).to_vec()
}
