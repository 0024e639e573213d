//! Synthetic hourly market with a known conditional quantile function.
//!
//! ```text
//! y[d, h] = level + profile(h) + a[d] + s[d, h] · e[d, h]
//! a[d]    = ar_coef · a[d−1] + ar_sd · u[d]
//! s[d, h] = noise_scale · hour_factor(h) · exp(load_gain · z[d]) · shift(d)
//! load    = 50 + 10 · profile_shape(h) + 5 · z[d]
//! ```
//!
//! `u`, `z` are standard normal, `e` is standard normal or a unit-variance
//! centred exponential (right skew). Conditional on the latent path the
//! quantile at level p is `mean[d, h] + s[d, h] · F⁻¹(p)`.

use std::f64::consts::PI;

use chrono::{NaiveDate, NaiveDateTime};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::RawSeries;
use crate::distributions::special::norm_inv;
use crate::error::{Error, Result};
use crate::HORIZON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    /// `Exp(1) − 1`: mean 0, variance 1, right-skewed.
    Skewed,
}

impl NoiseKind {
    fn quantile(self, p: f64) -> f64 {
        match self {
            NoiseKind::Gaussian => norm_inv(p),
            NoiseKind::Skewed => -(1.0 - p).ln() - 1.0,
        }
    }

    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            NoiseKind::Gaussian => rng.sample(StandardNormal),
            NoiseKind::Skewed => {
                let e: f64 = Exp1.sample(rng);
                e - 1.0
            }
        }
    }
}

/// Multiply the noise scale by `factor` from day index `day` onwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleShift {
    pub day: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub days: usize,
    pub seed: u64,
    pub start: NaiveDate,
    pub level: f64,
    pub profile_amplitude: f64,
    pub ar_coef: f64,
    pub ar_sd: f64,
    pub noise_scale: f64,
    /// Elasticity of the noise scale to the daily load anomaly.
    pub load_gain: f64,
    pub noise: NoiseKind,
    pub shift: Option<ScaleShift>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            days: 400,
            seed: 0,
            start: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            level: 50.0,
            profile_amplitude: 10.0,
            ar_coef: 0.8,
            ar_sd: 3.0,
            noise_scale: 5.0,
            load_gain: 0.3,
            noise: NoiseKind::Gaussian,
            shift: None,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.days == 0 {
            return Err(Error::Domain("synthetic series needs at least one day".into()));
        }
        if !(self.ar_coef.abs() < 1.0) {
            return Err(Error::Domain("ar_coef must lie in (−1, 1)".into()));
        }
        let nonneg = [
            self.noise_scale,
            self.ar_sd,
            self.load_gain.abs(),
            self.profile_amplitude.abs(),
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !self.level.is_finite() {
            return Err(Error::Domain("synthetic scales must be finite and non-negative".into()));
        }
        if let Some(s) = self.shift {
            if !(s.factor.is_finite() && s.factor > 0.0) {
                return Err(Error::Domain("shift factor must be positive".into()));
            }
        }
        Ok(())
    }
}

fn profile_shape(h: usize) -> f64 {
    let x = 2.0 * PI * h as f64 / HORIZON as f64;
    -(x.cos()) * 0.7 + (2.0 * x).sin() * 0.3
}

fn hour_factor(h: usize) -> f64 {
    1.0 + 0.5 * (PI * h as f64 / HORIZON as f64).sin()
}

/// True conditional distribution of each generated price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileOracle {
    mean: Array2<f64>,
    scale: Array2<f64>,
    noise: NoiseKind,
}

impl QuantileOracle {
    pub fn days(&self) -> usize {
        self.mean.nrows()
    }

    /// Deterministic part of the price at `(day, hour)`.
    pub fn center(&self, day: usize, hour: usize) -> f64 {
        self.mean[[day, hour]]
    }

    pub fn scale(&self, day: usize, hour: usize) -> f64 {
        self.scale[[day, hour]]
    }

    pub fn quantile(&self, day: usize, hour: usize, level: f64) -> Result<f64> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Domain(format!("quantile level {level} outside (0, 1)")));
        }
        if day >= self.days() || hour >= HORIZON {
            return Err(Error::Domain(format!("({day}, {hour}) outside the generated range")));
        }
        Ok(self.mean[[day, hour]] + self.scale[[day, hour]] * self.noise.quantile(level))
    }

    /// A fresh draw from the conditional distribution at `(day, hour)`.
    pub fn sample<R: Rng + ?Sized>(&self, day: usize, hour: usize, rng: &mut R) -> f64 {
        self.mean[[day, hour]] + self.scale[[day, hour]] * self.noise.draw(rng)
    }
}

/// Deterministic in `(config, seed)`. The series carries one exogenous column, `load`.
pub fn generate_synthetic_series(cfg: &SyntheticConfig) -> Result<(RawSeries, QuantileOracle)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.days * HORIZON;
    let mut mean = Array2::zeros((cfg.days, HORIZON));
    let mut scale = Array2::zeros((cfg.days, HORIZON));
    let mut price = Vec::with_capacity(n);
    let mut load = Array2::zeros((n, 1));
    let stationary_sd = cfg.ar_sd / (1.0 - cfg.ar_coef * cfg.ar_coef).sqrt();
    let mut latent = stationary_sd * rng.sample::<f64, _>(StandardNormal);

    for d in 0..cfg.days {
        if d > 0 {
            latent = cfg.ar_coef * latent + cfg.ar_sd * rng.sample::<f64, _>(StandardNormal);
        }
        let z: f64 = rng.sample(StandardNormal);
        let shift = match cfg.shift {
            Some(s) if d >= s.day => s.factor,
            _ => 1.0,
        };
        for h in 0..HORIZON {
            let m = cfg.level + cfg.profile_amplitude * profile_shape(h) + latent;
            let s = cfg.noise_scale * hour_factor(h) * (cfg.load_gain * z).exp() * shift;
            mean[[d, h]] = m;
            scale[[d, h]] = s;
            let e = cfg.noise.draw(&mut rng);
            price.push(m + s * e);
            load[[d * HORIZON + h, 0]] = 50.0 + 10.0 * profile_shape(h) + 5.0 * z;
        }
    }

    let t0: NaiveDateTime = cfg.start.and_hms_opt(0, 0, 0).expect("midnight");
    let timestamps = (0..n).map(|i| t0 + chrono::Duration::hours(i as i64)).collect();
    let raw = RawSeries::new(timestamps, price, load, vec!["load".into()])?;
    Ok((
        raw,
        QuantileOracle {
            mean,
            scale,
            noise: cfg.noise,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_deterministic_path() {
        let cfg = SyntheticConfig {
            days: 20,
            noise_scale: 0.0,
            ..Default::default()
        };
        let (raw, oracle) = generate_synthetic_series(&cfg).unwrap();
        for d in 0..20 {
            for h in 0..HORIZON {
                let y = raw.price()[d * HORIZON + h];
                let lo = oracle.quantile(d, h, 0.1).unwrap();
                let hi = oracle.quantile(d, h, 0.9).unwrap();
                assert_eq!(lo, y);
                assert_eq!(hi, y);
            }
        }
    }

    #[test]
    fn oracle_interval_covers_nominal() {
        let cfg = SyntheticConfig {
            days: 10_000,
            seed: 3,
            ..Default::default()
        };
        let (raw, oracle) = generate_synthetic_series(&cfg).unwrap();
        let mut hits = 0usize;
        for d in 0..cfg.days {
            for h in 0..HORIZON {
                let y = raw.price()[d * HORIZON + h];
                if oracle.quantile(d, h, 0.1).unwrap() <= y && y <= oracle.quantile(d, h, 0.9).unwrap() {
                    hits += 1;
                }
            }
        }
        let cov = hits as f64 / (cfg.days * HORIZON) as f64;
        assert!((cov - 0.8).abs() <= 0.01, "coverage {cov}");
    }

    #[test]
    fn draws_match_oracle_quantiles() {
        for noise in [NoiseKind::Gaussian, NoiseKind::Skewed] {
            let cfg = SyntheticConfig {
                days: 3,
                noise_scale: 0.2,
                load_gain: 0.0,
                noise,
                ..Default::default()
            };
            let (_, oracle) = generate_synthetic_series(&cfg).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut draws: Vec<f64> = (0..100_000).map(|_| oracle.sample(1, 12, &mut rng)).collect();
            draws.sort_by(f64::total_cmp);
            for k in 1..=9 {
                let p = k as f64 / 10.0;
                let emp = crate::ensemble::empirical_quantile_sorted(&draws, p);
                let truth = oracle.quantile(1, 12, p).unwrap();
                assert!((emp - truth).abs() <= 0.02, "{noise:?} p={p}: {emp} vs {truth}");
            }
        }
    }

    #[test]
    fn same_seed_same_series() {
        let cfg = SyntheticConfig {
            days: 30,
            seed: 99,
            noise: NoiseKind::Skewed,
            shift: Some(ScaleShift { day: 10, factor: 2.0 }),
            ..Default::default()
        };
        let a = generate_synthetic_series(&cfg).unwrap();
        let b = generate_synthetic_series(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_series(&SyntheticConfig { seed: 100, ..cfg }).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn shift_scales_noise() {
        let cfg = SyntheticConfig {
            days: 20,
            shift: Some(ScaleShift { day: 10, factor: 2.0 }),
            load_gain: 0.0,
            ..Default::default()
        };
        let (_, o) = generate_synthetic_series(&cfg).unwrap();
        assert!((o.scale(15, 3) / o.scale(5, 3) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs() {
        assert!(generate_synthetic_series(&SyntheticConfig {
            days: 0,
            ..Default::default()
        })
        .is_err());
        assert!(generate_synthetic_series(&SyntheticConfig {
            ar_coef: 1.0,
            ..Default::default()
        })
        .is_err());
    }
}
