//! Conformal calibration of quantile forecasts: split CP on absolute
//! residuals, asymmetric CQR on one-sided exceedances, and online tracking of
//! the CQR corrections.

mod ocq;
mod state;

pub use ocq::{compute_c_sat, IntegralMode, IntegratorForm, OcqParams, OcqTracker, TAN_CLAMP_MARGIN};
pub use state::{conformalize_forecast, Calibrated, ConformalConfig, ConformalState, Corrections, STATE_VERSION};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Calibration layer applied to a base forecast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConformalMethod {
    /// Uncalibrated ensemble output.
    #[serde(alias = "none")]
    Base,
    /// Symmetric band `median ± width` from absolute residuals.
    #[serde(rename = "cp", alias = "absolute")]
    Absolute,
    Cqr,
    Ocq,
}

impl ConformalMethod {
    pub const ALL: [ConformalMethod; 4] = [Self::Base, Self::Absolute, Self::Cqr, Self::Ocq];

    pub fn name(self) -> &'static str {
        match self {
            Self::Base => "base",
            Self::Absolute => "cp",
            Self::Cqr => "cqr",
            Self::Ocq => "ocq",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "base" | "none" => Some(Self::Base),
            "cp" | "absolute" => Some(Self::Absolute),
            "cqr" => Some(Self::Cqr),
            "ocq" => Some(Self::Ocq),
            _ => None,
        }
    }
}

impl std::fmt::Display for ConformalMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Most recent `capacity` scores in arrival order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBuffer {
    capacity: usize,
    scores: VecDeque<f64>,
}

impl ScoreBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Domain("score buffer capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            scores: VecDeque::with_capacity(capacity),
        })
    }

    pub fn from_scores(capacity: usize, scores: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut b = Self::new(capacity)?;
        for s in scores {
            b.push(s);
        }
        Ok(b)
    }

    pub fn push(&mut self, s: f64) {
        if self.scores.len() == self.capacity {
            self.scores.pop_front();
        }
        self.scores.push_back(s);
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.scores.iter().copied()
    }

    pub fn max(&self) -> Option<f64> {
        self.scores.iter().copied().reduce(f64::max)
    }
}

/// Rank `⌈(n+1)·level⌉` with a guard against representation error in the product.
fn conformal_rank(n: usize, level: f64) -> usize {
    ((n as f64 + 1.0) * level - 1e-9).ceil().max(1.0) as usize
}

/// The `⌈(n+1)·level⌉`-th smallest buffered score, or `+∞` when that rank exceeds `n`.
pub fn conformal_quantile(buf: &ScoreBuffer, level: f64) -> Result<f64> {
    if buf.is_empty() {
        return Err(Error::State("score buffer is empty".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("conformal level {level} outside (0, 1)")));
    }
    let n = buf.len();
    let k = conformal_rank(n, level);
    if k > n {
        return Ok(f64::INFINITY);
    }
    let mut v: Vec<f64> = buf.iter().collect();
    let (_, kth, _) = v.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

/// Half-width of the split-CP band at miscoverage `alpha`.
pub fn absolute_cp_width(scores: &ScoreBuffer, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    conformal_quantile(scores, 1.0 - alpha)
}

/// `(l, u)` for the interval `[q_lo − l, q_hi + u]`; each side takes the
/// `⌈(n+1)(1 − α/2)⌉`-th order statistic of its own scores.
pub fn cqr_corrections(lower: &ScoreBuffer, upper: &ScoreBuffer, alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let level = 1.0 - alpha / 2.0;
    Ok((conformal_quantile(lower, level)?, conformal_quantile(upper, level)?))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("miscoverage {alpha} outside (0, 1)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn buf(v: &[f64]) -> ScoreBuffer {
        ScoreBuffer::from_scores(v.len().max(1), v.iter().copied()).unwrap()
    }

    #[test]
    fn ring_keeps_most_recent() {
        let mut b = ScoreBuffer::new(3).unwrap();
        for s in 1..=5 {
            b.push(s as f64);
        }
        assert_eq!(b.iter().collect::<Vec<_>>(), vec![3.0, 4.0, 5.0]);
        assert!(ScoreBuffer::new(0).is_err());
    }

    #[test]
    fn absolute_width_examples() {
        assert_eq!(absolute_cp_width(&buf(&[0.0; 20]), 0.2).unwrap(), 0.0);
        let nine: Vec<f64> = (1..=9).map(f64::from).collect();
        assert_eq!(absolute_cp_width(&buf(&nine), 0.2).unwrap(), 8.0);
        assert_eq!(absolute_cp_width(&buf(&nine), 0.05).unwrap(), f64::INFINITY);
        assert!(matches!(
            absolute_cp_width(&ScoreBuffer::new(4).unwrap(), 0.2),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn cqr_examples() {
        let lower = buf(&[-2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let (l, u) = cqr_corrections(&lower, &lower, 0.2).unwrap();
        assert_eq!((l, u), (6.0, 6.0));
        let negative: Vec<f64> = (0..100).map(|i| -0.5 - i as f64 * 0.01).collect();
        let (l, _) = cqr_corrections(&buf(&negative), &buf(&negative), 0.02).unwrap();
        assert_eq!(l, -0.5);
    }

    #[test]
    fn method_names() {
        for m in ConformalMethod::ALL {
            assert_eq!(ConformalMethod::from_name(m.name()), Some(m));
            let js = serde_json::to_string(&m).unwrap();
            assert_eq!(js, format!("\"{}\"", m.name()));
        }
        let none: ConformalMethod = serde_json::from_str("\"none\"").unwrap();
        assert_eq!(none, ConformalMethod::Base);
    }

    proptest! {
        #[test]
        fn order_statistic_ignores_order(mut v in prop::collection::vec(-100.0f64..100.0, 1..60), alpha in 0.05f64..0.95, seed in any::<u64>()) {
            let a = absolute_cp_width(&buf(&v), alpha).unwrap();
            let (l, u) = cqr_corrections(&buf(&v), &buf(&v), alpha).unwrap();
            use rand::{seq::SliceRandom, SeedableRng};
            v.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(a, absolute_cp_width(&buf(&v), alpha).unwrap());
            prop_assert_eq!((l, u), cqr_corrections(&buf(&v), &buf(&v), alpha).unwrap());
        }

        #[test]
        fn width_decreases_with_alpha(v in prop::collection::vec(0.0f64..50.0, 1..60), a in 0.01f64..0.98, d in 0.0f64..0.5) {
            let b = (a + d).min(0.99);
            prop_assert!(absolute_cp_width(&buf(&v), a).unwrap() >= absolute_cp_width(&buf(&v), b).unwrap());
        }
    }
}
