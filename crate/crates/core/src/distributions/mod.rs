//! Distributional output heads: parameter transforms, log-densities, CDFs and
//! quantile functions for the Normal, Student-t and Johnson's SU families.

pub mod special;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT as StudentTSampler};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::HeadKind;
use crate::HORIZON;
use special::{norm_cdf, norm_inv, softplus, student_t_cdf, student_t_inv, student_t_ln_pdf, HALF_LN_2PI};

/// Lower bound added to every transformed scale.
pub const SCALE_EPS: f64 = 1e-3;
/// Gain applied to the softplus of positive-constrained slots.
pub const SOFTPLUS_GAIN: f64 = 3.0;
/// Minimum Student-t degrees of freedom produced by the head transform.
pub const MIN_DOF: f64 = 2.0;

/// Parameters of one hour's predictive distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistParams {
    Normal {
        mu: f64,
        sigma: f64,
    },
    StudentT {
        mu: f64,
        sigma: f64,
        nu: f64,
    },
    /// Johnson's SU with location `lambda`, scale `sigma`, tailweight `tau`
    /// and skewness `zeta`.
    JohnsonSu {
        lambda: f64,
        sigma: f64,
        tau: f64,
        zeta: f64,
    },
}

impl DistParams {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DistParams::Normal { mu, sigma } => mu.is_finite() && sigma > 0.0 && sigma.is_finite(),
            DistParams::StudentT { mu, sigma, nu } => mu.is_finite() && sigma > 0.0 && sigma.is_finite() && nu > 0.0,
            DistParams::JohnsonSu {
                lambda,
                sigma,
                tau,
                zeta,
            } => lambda.is_finite() && zeta.is_finite() && sigma > 0.0 && tau > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid distribution parameters {self:?}")))
        }
    }

    pub fn location(&self) -> f64 {
        match *self {
            DistParams::Normal { mu, .. } | DistParams::StudentT { mu, .. } => mu,
            DistParams::JohnsonSu { lambda, .. } => lambda,
        }
    }

    /// Natural-log density at `x`.
    pub fn log_pdf(&self, x: f64) -> f64 {
        match *self {
            DistParams::Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                -HALF_LN_2PI - sigma.ln() - 0.5 * z * z
            }
            DistParams::StudentT { mu, sigma, nu } => student_t_ln_pdf((x - mu) / sigma, nu) - sigma.ln(),
            DistParams::JohnsonSu {
                lambda,
                sigma,
                tau,
                zeta,
            } => {
                let u = (x - lambda) / sigma;
                let z = zeta + tau * u.asinh();
                tau.ln() - sigma.ln() - HALF_LN_2PI - 1.0_f64.hypot(u).ln() - 0.5 * z * z
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            DistParams::Normal { mu, sigma } => norm_cdf((x - mu) / sigma),
            DistParams::StudentT { mu, sigma, nu } => student_t_cdf((x - mu) / sigma, nu),
            DistParams::JohnsonSu {
                lambda,
                sigma,
                tau,
                zeta,
            } => norm_cdf(zeta + tau * ((x - lambda) / sigma).asinh()),
        }
    }

    /// Quantile function; `p` must lie strictly inside (0, 1).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("quantile level {p} outside (0, 1)")));
        }
        Ok(match *self {
            DistParams::Normal { mu, sigma } => mu + sigma * norm_inv(p),
            DistParams::StudentT { mu, sigma, nu } => mu + sigma * student_t_inv(p, nu),
            DistParams::JohnsonSu {
                lambda,
                sigma,
                tau,
                zeta,
            } => lambda + sigma * ((norm_inv(p) - zeta) / tau).sinh(),
        })
    }

    /// Draw one value. Uses the families' generative forms rather than the
    /// quantile function, so Monte Carlo extraction is an independent route.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DistParams::Normal { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                mu + sigma * z
            }
            DistParams::StudentT { mu, sigma, nu } => {
                let t = StudentTSampler::new(nu).expect("validated dof").sample(rng);
                mu + sigma * t
            }
            DistParams::JohnsonSu {
                lambda,
                sigma,
                tau,
                zeta,
            } => {
                let z: f64 = StandardNormal.sample(rng);
                lambda + sigma * ((z - zeta) / tau).sinh()
            }
        }
    }
}

/// Map a raw output vector to per-hour distribution parameters.
///
/// Slot layout is block-major: parameter `k` for hour `h` sits at
/// `k * HORIZON + h`. Location and skewness pass through; scales become
/// `SCALE_EPS + SOFTPLUS_GAIN * softplus(raw)`, JSU tailweight
/// `1 + SOFTPLUS_GAIN * softplus(raw)` and Student-t dof
/// `MIN_DOF + SOFTPLUS_GAIN * softplus(raw)`.
pub fn transform_head_outputs(raw: &[f64], head: &HeadKind) -> Result<Vec<DistParams>> {
    let h_n = HORIZON;
    let expect = head.n_params() * h_n;
    if raw.len() != expect {
        return Err(Error::Contract(format!(
            "head {head:?} expects {expect} raw outputs, got {}",
            raw.len()
        )));
    }
    let scale = |r: f64| SCALE_EPS + SOFTPLUS_GAIN * softplus(r);
    let out = (0..h_n)
        .map(|h| match head {
            HeadKind::Normal => Ok(DistParams::Normal {
                mu: raw[h],
                sigma: scale(raw[h_n + h]),
            }),
            HeadKind::StudentT => Ok(DistParams::StudentT {
                mu: raw[h],
                sigma: scale(raw[h_n + h]),
                nu: MIN_DOF + SOFTPLUS_GAIN * softplus(raw[2 * h_n + h]),
            }),
            HeadKind::JohnsonSu => Ok(DistParams::JohnsonSu {
                lambda: raw[h],
                sigma: scale(raw[h_n + h]),
                tau: 1.0 + SOFTPLUS_GAIN * softplus(raw[2 * h_n + h]),
                zeta: raw[3 * h_n + h],
            }),
            other => Err(Error::Contract(format!("{other:?} is not a distributional head"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn jsu(lambda: f64, sigma: f64, tau: f64, zeta: f64) -> DistParams {
        DistParams::JohnsonSu {
            lambda,
            sigma,
            tau,
            zeta,
        }
    }

    #[test]
    fn jsu_transform_at_zero() {
        let raw = vec![0.0; 4 * HORIZON];
        let params = transform_head_outputs(&raw, &HeadKind::JohnsonSu).unwrap();
        match params[0] {
            DistParams::JohnsonSu {
                lambda,
                sigma,
                tau,
                zeta,
            } => {
                // 1e-3 + 3 ln 2 and 1 + 3 ln 2
                assert!((sigma - 2.080_441_5).abs() < 1e-5);
                assert!((tau - 3.079_441_5).abs() < 1e-5);
                assert_eq!(lambda, 0.0);
                assert_eq!(zeta, 0.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn transform_passes_location_and_clamps_scale() {
        let mut raw = vec![0.0; 4 * HORIZON];
        raw[0] = 5.3;
        raw[HORIZON] = -1e4;
        let params = transform_head_outputs(&raw, &HeadKind::JohnsonSu).unwrap();
        let DistParams::JohnsonSu { lambda, sigma, .. } = params[0] else {
            unreachable!()
        };
        assert_eq!(lambda, 5.3);
        assert!(sigma.is_finite() && sigma > 0.0);
        assert!((sigma - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn transform_rejects_wrong_length() {
        assert!(transform_head_outputs(&[0.0; 10], &HeadKind::Normal).is_err());
        assert!(transform_head_outputs(&[0.0; 24], &HeadKind::Point).is_err());
    }

    #[test]
    fn log_pdf_hand_values() {
        let n = DistParams::Normal { mu: 0.0, sigma: 1.0 };
        assert!((n.log_pdf(0.0) + 0.918_938_5).abs() < 1e-7);
        assert!((jsu(0.0, 1.0, 1.0, 0.0).log_pdf(0.0) + 0.918_938_5).abs() < 1e-7);
    }

    #[test]
    fn jsu_quantile_hand_values() {
        let d = jsu(5.0, 2.0, 1.0, 0.0);
        let p = norm_cdf(1.0);
        assert!((d.quantile(p).unwrap() - 7.350_402_387_287_6).abs() < 1e-9);
        for tau in [0.5, 1.0, 4.0] {
            assert_eq!(jsu(3.0, 2.0, tau, 0.0).quantile(0.5).unwrap(), 3.0);
        }
        assert!(d.quantile(0.0).is_err());
        assert!(d.quantile(1.0).is_err());
    }

    #[test]
    fn normal_quantile_known() {
        let n = DistParams::Normal { mu: 0.0, sigma: 1.0 };
        assert!((n.quantile(0.975).unwrap() - 1.959_964).abs() < 1e-6);
    }

    #[test]
    fn sampling_matches_cdf_roughly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = jsu(1.0, 2.0, 1.5, -0.7);
        let n = 20_000;
        let below = (0..n)
            .filter(|_| d.sample(&mut rng) <= d.quantile(0.3).unwrap())
            .count();
        assert!((below as f64 / n as f64 - 0.3).abs() < 0.015);
    }
}
