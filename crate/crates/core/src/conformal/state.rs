use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{absolute_cp_width, cqr_corrections, ConformalMethod, OcqParams, OcqTracker, ScoreBuffer};
use crate::ensemble::{median_column, sort_quantiles_in_place, QuantileForecast, QuantileGrid};
use crate::error::{ensure, Error, Result};
use crate::HORIZON;

pub const STATE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConformalConfig {
    /// Calibration buffer length in days.
    pub n_cal: usize,
    pub ocq: OcqParams,
}

impl Default for ConformalConfig {
    fn default() -> Self {
        Self {
            n_cal: 182,
            ocq: OcqParams::default(),
        }
    }
}

impl ConformalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cal == 0 {
            return Err(Error::Domain("n_cal must be positive".into()));
        }
        self.ocq.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Cell {
    lower: ScoreBuffer,
    upper: ScoreBuffer,
    lower_tracker: Option<OcqTracker>,
    upper_tracker: Option<OcqTracker>,
}

/// Score buffers and online trackers for every (α-pair, hour, side), plus
/// per-hour absolute-residual buffers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalState {
    version: u32,
    grid: QuantileGrid,
    config: ConformalConfig,
    /// Pair-major: `pair * HORIZON + hour`.
    cells: Vec<Cell>,
    absolute: Vec<ScoreBuffer>,
    observed_days: usize,
}

/// Additive corrections per (α-pair, hour). For the absolute method both
/// matrices hold the band half-width around the point forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct Corrections {
    pub lower: Array2<f64>,
    pub upper: Array2<f64>,
    /// Cells where the conformal rank exceeded the buffer and the largest
    /// buffered score was used instead.
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibrated {
    pub forecast: QuantileForecast,
    pub fallbacks: usize,
}

fn finite_or_max(v: f64, buf: &ScoreBuffer, fallbacks: &mut usize) -> f64 {
    if v.is_finite() {
        v
    } else {
        *fallbacks += 1;
        buf.max().unwrap_or(0.0)
    }
}

impl ConformalState {
    pub fn new(grid: QuantileGrid, config: ConformalConfig) -> Result<Self> {
        config.validate()?;
        let n_pairs = grid.pairs().len();
        let cell = Cell {
            lower: ScoreBuffer::new(config.n_cal)?,
            upper: ScoreBuffer::new(config.n_cal)?,
            lower_tracker: None,
            upper_tracker: None,
        };
        Ok(Self {
            version: STATE_VERSION,
            cells: vec![cell; n_pairs * HORIZON],
            absolute: vec![ScoreBuffer::new(config.n_cal)?; HORIZON],
            grid,
            config,
            observed_days: 0,
        })
    }

    pub fn grid(&self) -> &QuantileGrid {
        &self.grid
    }

    pub fn config(&self) -> &ConformalConfig {
        &self.config
    }

    pub fn observed_days(&self) -> usize {
        self.observed_days
    }

    pub fn is_online(&self) -> bool {
        self.cells
            .iter()
            .all(|c| c.lower_tracker.is_some() && c.upper_tracker.is_some())
    }

    fn cell(&self, pair: usize, hour: usize) -> &Cell {
        &self.cells[pair * HORIZON + hour]
    }

    pub fn lower_scores(&self, pair: usize, hour: usize) -> &ScoreBuffer {
        &self.cell(pair, hour).lower
    }

    pub fn upper_scores(&self, pair: usize, hour: usize) -> &ScoreBuffer {
        &self.cell(pair, hour).upper
    }

    pub fn absolute_scores(&self, hour: usize) -> &ScoreBuffer {
        &self.absolute[hour]
    }

    pub fn trackers(&self, pair: usize, hour: usize) -> Option<(&OcqTracker, &OcqTracker)> {
        let c = self.cell(pair, hour);
        c.lower_tracker.as_ref().zip(c.upper_tracker.as_ref())
    }

    /// Score a base forecast against realized prices: update trackers (once
    /// online), then push into the buffers. `point` defaults to the median.
    pub fn observe(&mut self, base: ArrayView2<f64>, point: Option<&[f64]>, y: &[f64]) -> Result<()> {
        self.check_shape(base)?;
        ensure(y.len() == HORIZON, || {
            format!("expected {HORIZON} realized prices, got {}", y.len())
        })?;
        ensure(y.iter().all(|v| v.is_finite()), || {
            "realized prices must be finite".into()
        })?;
        let median;
        let point = match point {
            Some(p) => {
                ensure(p.len() == HORIZON, || "point forecast must cover 24 hours".into())?;
                p
            }
            None => {
                median = median_column(&base.to_owned(), &self.grid);
                &median[..]
            }
        };
        for (p, pair) in self.grid.pairs().iter().enumerate() {
            for h in 0..HORIZON {
                let s_lo = base[[h, pair.lower]] - y[h];
                let s_hi = y[h] - base[[h, pair.upper]];
                let cell = &mut self.cells[p * HORIZON + h];
                if let Some(t) = cell.lower_tracker.as_mut() {
                    t.update(s_lo);
                }
                if let Some(t) = cell.upper_tracker.as_mut() {
                    t.update(s_hi);
                }
                cell.lower.push(s_lo);
                cell.upper.push(s_hi);
            }
        }
        for h in 0..HORIZON {
            self.absolute[h].push((y[h] - point[h]).abs());
        }
        self.observed_days += 1;
        Ok(())
    }

    /// Start every online tracker at the current CQR correction of its cell.
    /// Trackers that already exist are left alone.
    pub fn start_online(&mut self) -> Result<()> {
        let pairs = self.grid.pairs();
        for (p, pair) in pairs.iter().enumerate() {
            for h in 0..HORIZON {
                let cell = &mut self.cells[p * HORIZON + h];
                if cell.lower_tracker.is_some() && cell.upper_tracker.is_some() {
                    continue;
                }
                let (l, u) = cqr_corrections(&cell.lower, &cell.upper, pair.alpha)?;
                let mut ignored = 0;
                let l = finite_or_max(l, &cell.lower, &mut ignored);
                let u = finite_or_max(u, &cell.upper, &mut ignored);
                let target = pair.alpha / 2.0;
                cell.lower_tracker = Some(OcqTracker::new(l, target, &self.config.ocq)?);
                cell.upper_tracker = Some(OcqTracker::new(u, target, &self.config.ocq)?);
            }
        }
        Ok(())
    }

    pub fn corrections(&self, method: ConformalMethod) -> Result<Corrections> {
        let pairs = self.grid.pairs();
        let mut lower = Array2::zeros((pairs.len(), HORIZON));
        let mut upper = Array2::zeros((pairs.len(), HORIZON));
        let mut fallbacks = 0;
        for (p, pair) in pairs.iter().enumerate() {
            for h in 0..HORIZON {
                let (l, u) = match method {
                    ConformalMethod::Base => (0.0, 0.0),
                    ConformalMethod::Absolute => {
                        let buf = &self.absolute[h];
                        let w = finite_or_max(absolute_cp_width(buf, pair.alpha)?, buf, &mut fallbacks);
                        (w, w)
                    }
                    ConformalMethod::Cqr | ConformalMethod::Ocq => {
                        let cell = self.cell(p, h);
                        let tracked = match (&cell.lower_tracker, &cell.upper_tracker) {
                            (Some(lt), Some(ut))
                                if method == ConformalMethod::Ocq && lt.steps() >= self.config.ocq.burn_in =>
                            {
                                Some((lt.threshold(), ut.threshold()))
                            }
                            _ => None,
                        };
                        match tracked {
                            Some(v) => v,
                            None => {
                                let (l, u) = cqr_corrections(&cell.lower, &cell.upper, pair.alpha)?;
                                (
                                    finite_or_max(l, &cell.lower, &mut fallbacks),
                                    finite_or_max(u, &cell.upper, &mut fallbacks),
                                )
                            }
                        }
                    }
                };
                lower[[p, h]] = l;
                upper[[p, h]] = u;
            }
        }
        Ok(Corrections {
            lower,
            upper,
            fallbacks,
        })
    }

    fn check_shape(&self, q: ArrayView2<f64>) -> Result<()> {
        ensure(q.nrows() == HORIZON && q.ncols() == self.grid.len(), || {
            format!(
                "forecast shape {:?} does not match {HORIZON}×{}",
                q.shape(),
                self.grid.len()
            )
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let st: Self = serde_json::from_str(s)?;
        if st.version != STATE_VERSION {
            return Err(Error::Schema(format!(
                "conformal state version {} unsupported (expected {STATE_VERSION})",
                st.version
            )));
        }
        let n_pairs = st.grid.pairs().len();
        if st.cells.len() != n_pairs * HORIZON || st.absolute.len() != HORIZON {
            return Err(Error::Schema(
                "conformal state cell count does not match its grid".into(),
            ));
        }
        Ok(st)
    }
}

/// Apply `method`'s corrections to a base forecast and restore monotonicity.
/// `point` centres the absolute band and defaults to the median.
pub fn conformalize_forecast(
    qf: &QuantileForecast,
    state: &ConformalState,
    method: ConformalMethod,
    point: Option<&[f64]>,
) -> Result<Calibrated> {
    state.check_shape(qf.q.view())?;
    if method == ConformalMethod::Base {
        return Ok(Calibrated {
            forecast: qf.clone(),
            fallbacks: 0,
        });
    }
    let cold = match method {
        ConformalMethod::Absolute => state.absolute.iter().any(ScoreBuffer::is_empty),
        _ => state.cells.iter().any(|c| c.lower.is_empty() || c.upper.is_empty()),
    };
    if cold {
        return Err(Error::State(format!("{method} calibration buffers are empty")));
    }
    let corr = state.corrections(method)?;
    let mut q = qf.q.clone();
    let pairs = state.grid.pairs();
    if method == ConformalMethod::Absolute {
        let median;
        let centre = match point {
            Some(p) => {
                ensure(p.len() == HORIZON, || "point forecast must cover 24 hours".into())?;
                p
            }
            None => {
                median = median_column(&qf.q, &state.grid);
                &median[..]
            }
        };
        for (p, pair) in pairs.iter().enumerate() {
            for h in 0..HORIZON {
                q[[h, pair.lower]] = centre[h] - corr.lower[[p, h]];
                q[[h, pair.upper]] = centre[h] + corr.upper[[p, h]];
            }
        }
    } else {
        for (p, pair) in pairs.iter().enumerate() {
            for h in 0..HORIZON {
                q[[h, pair.lower]] -= corr.lower[[p, h]];
                q[[h, pair.upper]] += corr.upper[[p, h]];
            }
        }
    }
    sort_quantiles_in_place(&mut q);
    Ok(Calibrated {
        forecast: QuantileForecast::new(qf.delivery_date, q),
        fallbacks: corr.fallbacks,
    })
}
