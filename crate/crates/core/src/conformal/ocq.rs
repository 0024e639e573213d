//! Online tracking of a one-sided score quantile: a quantile-loss
//! subgradient step plus a saturating tangent integrator of past miscoverage.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance kept from the tangent pole.
pub const TAN_CLAMP_MARGIN: f64 = 1e-3;

/// `(2/π)·(⌈ln T · δ⌉ − 1/ln T)`.
pub fn compute_c_sat(horizon: f64, delta: f64) -> Result<f64> {
    if !(horizon > 1.0) || !(delta > 0.0) || !horizon.is_finite() || !delta.is_finite() {
        return Err(Error::Domain(format!(
            "saturation constant needs T > 1 and δ > 0 (got T = {horizon}, δ = {delta})"
        )));
    }
    let ln_t = horizon.ln();
    Ok((2.0 / std::f64::consts::PI) * ((ln_t * delta - 1e-12).ceil() - 1.0 / ln_t))
}

/// Which indicator feeds the miscoverage integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorForm {
    /// `1{s > q̄} − α/2`: zero-mean at the target quantile.
    #[default]
    Corrected,
    /// `1{q̄ ≥ s} − α/2`, the coverage indicator.
    Coverage,
}

/// How the integrator output enters the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralMode {
    /// Threshold = subgradient-tracked quantile + `r_t(err_sum)`. The
    /// integrator is an offset recomputed each step, not a running sum.
    #[default]
    Offset,
    /// `q̄ ← q̄ + η·∇ρ + r_t(err_sum)`: the integrator output is itself
    /// summed into the threshold every step.
    Accumulating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcqParams {
    pub eta: f64,
    pub k_i: f64,
    /// Explicit saturation constant; when absent it is derived from
    /// `saturation_horizon` and `saturation_delta`.
    pub c_sat: Option<f64>,
    pub saturation_horizon: f64,
    pub saturation_delta: f64,
    pub burn_in: usize,
    pub integrator_form: IntegratorForm,
    pub integral_mode: IntegralMode,
}

impl Default for OcqParams {
    fn default() -> Self {
        Self {
            eta: 1e-2,
            k_i: 10.0,
            c_sat: None,
            saturation_horizon: 1e9,
            saturation_delta: 0.05,
            burn_in: 7,
            integrator_form: IntegratorForm::Corrected,
            integral_mode: IntegralMode::Offset,
        }
    }
}

impl OcqParams {
    pub fn c_sat_value(&self) -> Result<f64> {
        match self.c_sat {
            Some(c) if c > 0.0 && c.is_finite() => Ok(c),
            Some(c) => Err(Error::Domain(format!("c_sat must be positive, got {c}"))),
            None => compute_c_sat(self.saturation_horizon, self.saturation_delta),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) || !(self.k_i >= 0.0 && self.k_i.is_finite()) {
            return Err(Error::Domain("eta and k_i must be finite and non-negative".into()));
        }
        self.c_sat_value().map(|_| ())
    }
}

/// Tracked threshold for one (hour, side, α) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcqTracker {
    q_bar: f64,
    /// Threshold without the integrator offset.
    tracked: f64,
    err_sum: f64,
    steps: usize,
    /// Per-side miscoverage target, `α/2`.
    target: f64,
    eta: f64,
    k_i: f64,
    c_sat: f64,
    form: IntegratorForm,
    mode: IntegralMode,
}

impl OcqTracker {
    pub fn new(q_bar: f64, target: f64, params: &OcqParams) -> Result<Self> {
        params.validate()?;
        if !(target > 0.0 && target < 1.0) {
            return Err(Error::Domain(format!("miscoverage target {target} outside (0, 1)")));
        }
        if !q_bar.is_finite() {
            return Err(Error::Domain("initial threshold must be finite".into()));
        }
        Ok(Self {
            q_bar,
            tracked: q_bar,
            err_sum: 0.0,
            steps: 0,
            target,
            eta: params.eta,
            k_i: params.k_i,
            c_sat: params.c_sat_value()?,
            form: params.integrator_form,
            mode: params.integral_mode,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.q_bar
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn err_sum(&self) -> f64 {
        self.err_sum
    }

    /// `K_I · tan(clamp(x · ln t / (t · C_sat)))`.
    fn integrator(&self, x: f64, t: f64) -> f64 {
        let lim = FRAC_PI_2 - TAN_CLAMP_MARGIN;
        let arg = x * t.ln() / (t * self.c_sat);
        let arg = if arg.is_nan() { 0.0 } else { arg.clamp(-lim, lim) };
        self.k_i * arg.tan()
    }

    /// Absorb one realized score.
    pub fn update(&mut self, s: f64) {
        let t = (self.steps + 1) as f64;
        let miss = s > self.q_bar;
        let indicator = match self.form {
            IntegratorForm::Corrected => miss,
            IntegratorForm::Coverage => !miss,
        };
        self.err_sum += f64::from(u8::from(indicator)) - self.target;
        let grad = if miss { 1.0 - self.target } else { -self.target };
        let r = self.integrator(self.err_sum, t);
        match self.mode {
            IntegralMode::Offset => {
                self.tracked += self.eta * grad;
                self.q_bar = self.tracked + r;
            }
            IntegralMode::Accumulating => {
                self.q_bar += self.eta * grad + r;
                self.tracked = self.q_bar;
            }
        }
        self.steps += 1;
    }
}
