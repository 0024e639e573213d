//! Training losses and their derivatives w.r.t. the raw network outputs.

use ndarray::{Array2, ArrayView2};

use crate::distributions::special::{digamma, sigmoid};
use crate::distributions::{transform_head_outputs, DistParams, SOFTPLUS_GAIN};
use crate::error::{ensure, Error, Result};
use crate::network::HeadKind;
use crate::HORIZON;

/// Average pinball loss of an `H × Γ` quantile matrix against `H` targets.
///
/// Mean over hours and levels of `γ (y − q) 1{y > q} + (1 − γ)(q − y) 1{y ≤ q}`.
pub fn pinball_loss(q_hat: ArrayView2<f64>, y: &[f64], levels: &[f64]) -> Result<f64> {
    ensure(q_hat.nrows() == y.len() && q_hat.ncols() == levels.len(), || {
        format!(
            "pinball: quantiles {:?} vs {} targets and {} levels",
            q_hat.shape(),
            y.len(),
            levels.len()
        )
    })?;
    let mut acc = 0.0;
    for (row, &yh) in q_hat.rows().into_iter().zip(y) {
        for (&q, &g) in row.iter().zip(levels) {
            acc += pinball(yh, q, g);
        }
    }
    Ok(acc / (y.len() * levels.len()) as f64)
}

#[inline]
pub(crate) fn pinball(y: f64, q: f64, level: f64) -> f64 {
    if y > q {
        level * (y - q)
    } else {
        (1.0 - level) * (q - y)
    }
}

/// Sum over hours of the negative log-density of each target.
pub fn distribution_nll(params: &[DistParams], y: &[f64]) -> Result<f64> {
    ensure(params.len() == y.len(), || {
        format!("nll: {} parameter sets for {} targets", params.len(), y.len())
    })?;
    let mut acc = 0.0;
    for (d, &yh) in params.iter().zip(y) {
        d.validate()?;
        acc -= d.log_pdf(yh);
    }
    if acc.is_finite() {
        Ok(acc)
    } else {
        Err(Error::Domain("non-finite negative log-likelihood".into()))
    }
}

/// Batch loss and `∂loss/∂ℓ2` for a head.
///
/// Conventions: MAE and pinball average over samples × hours (× levels); the
/// NLL heads average the per-sample hour sums over samples. At the pinball and
/// MAE kinks the `y ≤ q` branch supplies the subgradient.
pub fn head_loss_grad(head: &HeadKind, out: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    let b = out.nrows();
    ensure(
        out.ncols() == head.n_outputs() && y.nrows() == b && y.ncols() == HORIZON,
        || {
            format!(
                "head {}: outputs {:?}, targets {:?}",
                head.name(),
                out.shape(),
                y.shape()
            )
        },
    )?;
    ensure(b > 0, || "empty batch".into())?;
    let h_n = HORIZON;
    let mut grad = Array2::<f64>::zeros(out.raw_dim());
    let mut loss = 0.0;
    match head {
        HeadKind::Point => {
            let norm = (b * h_n) as f64;
            for i in 0..b {
                for h in 0..h_n {
                    let (q, t) = (out[[i, h]], y[[i, h]]);
                    loss += (t - q).abs();
                    grad[[i, h]] = if t > q { -1.0 } else { 1.0 } / norm;
                }
            }
            loss /= norm;
        }
        HeadKind::Quantile { grid } => {
            let levels = grid.levels();
            let norm = (b * h_n * levels.len()) as f64;
            for i in 0..b {
                for (k, &g) in levels.iter().enumerate() {
                    for h in 0..h_n {
                        let slot = k * h_n + h;
                        let (q, t) = (out[[i, slot]], y[[i, h]]);
                        loss += pinball(t, q, g);
                        grad[[i, slot]] = if t > q { -g } else { 1.0 - g } / norm;
                    }
                }
            }
            loss /= norm;
        }
        HeadKind::Normal | HeadKind::StudentT | HeadKind::JohnsonSu => {
            let inv_b = 1.0 / b as f64;
            for i in 0..b {
                let raw = out.row(i);
                let raw = raw.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| raw.to_vec());
                let params = transform_head_outputs(&raw, head)?;
                for h in 0..h_n {
                    let t = y[[i, h]];
                    let (nll, d_params) = nll_and_param_grad(&params[h], t);
                    loss += nll;
                    // chain through the head transforms
                    for (k, dp) in d_params.iter().enumerate() {
                        let slot = k * h_n + h;
                        let r = raw[slot];
                        let dtrans = match (head, k) {
                            (_, 0) => 1.0,
                            (HeadKind::JohnsonSu, 3) => 1.0,
                            _ => SOFTPLUS_GAIN * sigmoid(r),
                        };
                        grad[[i, slot]] = dp * dtrans * inv_b;
                    }
                }
            }
            loss *= inv_b;
            if !loss.is_finite() {
                return Err(Error::Domain("non-finite NLL in batch".into()));
            }
        }
    }
    Ok((loss, grad))
}

/// Negative log-density and its gradient w.r.t. the family's natural
/// parameters, in the order `(μ, σ)`, `(μ, σ, ν)` or `(λ, σ, τ, ζ)`.
fn nll_and_param_grad(d: &DistParams, y: f64) -> (f64, Vec<f64>) {
    let nll = -d.log_pdf(y);
    let grads = match *d {
        DistParams::Normal { mu, sigma } => {
            let z = (y - mu) / sigma;
            vec![-z / sigma, (1.0 - z * z) / sigma]
        }
        DistParams::StudentT { mu, sigma, nu } => {
            let z = (y - mu) / sigma;
            let z2 = z * z;
            let denom = nu + z2;
            let d_mu = -(nu + 1.0) * z / (denom * sigma);
            let d_sigma = (1.0 - (nu + 1.0) * z2 / denom) / sigma;
            let dlogf_dnu =
                0.5 * digamma(0.5 * (nu + 1.0)) - 0.5 * digamma(0.5 * nu) - 0.5 / nu - 0.5 * (z2 / nu).ln_1p()
                    + (nu + 1.0) * z2 / (2.0 * nu * denom);
            vec![d_mu, d_sigma, -dlogf_dnu]
        }
        DistParams::JohnsonSu {
            lambda,
            sigma,
            tau,
            zeta,
        } => {
            let u = (y - lambda) / sigma;
            let w = u.asinh();
            let z = zeta + tau * w;
            let root = 1.0_f64.hypot(u);
            // d log f / du
            let dlogf_du = -u / (root * root) - z * tau / root;
            vec![dlogf_du / sigma, (1.0 + dlogf_du * u) / sigma, -1.0 / tau + z * w, z]
        }
    };
    (nll, grads)
}
