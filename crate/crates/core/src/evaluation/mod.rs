//! Scoring rules and forecast-comparison tests.

mod report;

pub use report::{dm_comparisons, evaluate_method, DmEntry, EvalReport, MethodReport};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::distributions::special::{chi2_1_sf, norm_cdf};
use crate::ensemble::QuantileForecast;
use crate::error::{ensure, Error, Result};
use crate::network::pinball_loss;

/// 95% critical value of χ²(1).
pub const KUPIEC_CRITICAL_05: f64 = 3.841_458_820_694_124;

/// Fraction of observations inside the closed interval `[lower, upper]`.
pub fn picp(lower: &[f64], upper: &[f64], y: &[f64]) -> Result<f64> {
    ensure(
        lower.len() == y.len() && upper.len() == y.len() && !y.is_empty(),
        || {
            format!(
                "picp: lengths {} / {} / {} must match and be non-zero",
                lower.len(),
                upper.len(),
                y.len()
            )
        },
    )?;
    let hits = y
        .iter()
        .zip(lower.iter().zip(upper))
        .filter(|(v, (l, u))| *l <= *v && *v <= *u)
        .count();
    Ok(hits as f64 / y.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KupiecResult {
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
}

fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Unconditional-coverage likelihood ratio, `−2 ln` form, against nominal
/// miscoverage `alpha`. `n_hits` observations fell inside the PI.
pub fn kupiec_test(n_hits: usize, n_viol: usize, alpha: f64) -> Result<KupiecResult> {
    let n = n_hits + n_viol;
    ensure(n >= 1, || "kupiec: no observations".into())?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("kupiec: alpha {alpha} outside (0, 1)")));
    }
    let (n1, n0) = (n_hits as f64, n_viol as f64);
    let pi = n1 / n as f64;
    let ll_null = xlny(n0, alpha) + xlny(n1, 1.0 - alpha);
    let ll_alt = xlny(n0, 1.0 - pi) + xlny(n1, pi);
    let statistic = (-2.0 * (ll_null - ll_alt)).max(0.0);
    let p_value = chi2_1_sf(statistic);
    Ok(KupiecResult {
        statistic,
        p_value,
        reject: p_value < 0.05,
    })
}

/// Interval score of one observation.
pub fn winkler_one(lower: f64, upper: f64, y: f64, alpha: f64) -> f64 {
    let width = upper - lower;
    if y < lower {
        width + 2.0 / alpha * (lower - y)
    } else if y > upper {
        width + 2.0 / alpha * (y - upper)
    } else {
        width
    }
}

/// Mean interval score.
pub fn winkler_score(lower: &[f64], upper: &[f64], y: &[f64], alpha: f64) -> Result<f64> {
    ensure(
        lower.len() == y.len() && upper.len() == y.len() && !y.is_empty(),
        || "winkler: lengths must match and be non-zero".into(),
    )?;
    ensure(lower.iter().zip(upper).all(|(l, u)| l <= u), || {
        "winkler: lower bound above upper".into()
    })?;
    let total: f64 = (0..y.len()).map(|i| winkler_one(lower[i], upper[i], y[i], alpha)).sum();
    Ok(total / y.len() as f64)
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    ensure(y.len() == y_hat.len() && !y.is_empty(), || {
        format!("mae: {} targets vs {} predictions", y.len(), y_hat.len())
    })?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// `(Σ_h |e_h|^n)^{1/n}` per row of a days × hours error matrix.
pub fn daily_norm_loss(errors: ArrayView2<f64>, norm: f64) -> Result<Vec<f64>> {
    if !(norm >= 1.0 && norm.is_finite()) {
        return Err(Error::Domain(format!("norm order {norm} must be ≥ 1")));
    }
    Ok(errors
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|e| e.abs().powf(norm)).sum::<f64>().powf(1.0 / norm))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub statistic: f64,
    /// `Φ(DM)`: small when `a` has the smaller loss.
    pub p_left: f64,
    /// `1 − Φ(DM)`: small when `a` has the larger loss.
    pub p_right: f64,
}

/// Diebold–Mariano z-test on daily loss differentials `Δ = a − b`, with the
/// sample standard deviation (`n − 1`).
pub fn dm_test(loss_a: &[f64], loss_b: &[f64]) -> Result<DmResult> {
    ensure(loss_a.len() == loss_b.len() && loss_a.len() >= 2, || {
        format!("dm: needs ≥ 2 paired days, got {} and {}", loss_a.len(), loss_b.len())
    })?;
    let n = loss_a.len() as f64;
    let d: Vec<f64> = loss_a.iter().zip(loss_b).map(|(a, b)| a - b).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::Degenerate("loss differentials have zero variance".into()));
    }
    let statistic = n.sqrt() * mean / sd;
    let p_left = norm_cdf(statistic);
    Ok(DmResult {
        statistic,
        p_left,
        p_right: norm_cdf(-statistic),
    })
}

/// Average pinball loss over all test days, hours and levels.
pub fn pinball_report(forecasts: &[QuantileForecast], realized: ArrayView2<f64>, levels: &[f64]) -> Result<f64> {
    ensure(forecasts.len() == realized.nrows() && !forecasts.is_empty(), || {
        format!(
            "pinball report: {} forecasts vs {} realized days",
            forecasts.len(),
            realized.nrows()
        )
    })?;
    let mut total = 0.0;
    for (qf, y) in forecasts.iter().zip(realized.rows()) {
        total += pinball_loss(qf.q.view(), y.as_slice().unwrap_or(&y.to_vec()), levels)?;
    }
    Ok(total / forecasts.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn picp_closed_interval() {
        assert_eq!(picp(&[0.0; 3], &[1.0; 3], &[0.0, 0.5, 1.0]).unwrap(), 1.0);
        assert_eq!(picp(&[0.0; 4], &[1.0; 4], &[0.5, 2.0, -1.0, 0.2]).unwrap(), 0.5);
        assert!(matches!(picp(&[0.0], &[1.0; 2], &[0.5]), Err(Error::Contract(_))));
    }

    #[test]
    fn kupiec_examples() {
        let exact = kupiec_test(80, 20, 0.2).unwrap();
        assert_eq!(exact.statistic, 0.0);
        assert!((exact.p_value - 1.0).abs() < 1e-12);
        assert!(!exact.reject);

        let off = kupiec_test(70, 30, 0.2).unwrap();
        let oracle = -2.0 * (30.0 * 0.2f64.ln() + 70.0 * 0.8f64.ln() - 30.0 * 0.3f64.ln() - 70.0 * 0.7f64.ln());
        assert!((off.statistic - oracle).abs() < 1e-12);
        assert!((off.statistic - 5.633_5).abs() < 1e-3);
        assert!(off.reject);

        let all = kupiec_test(100, 0, 0.2).unwrap();
        assert!((all.statistic - 44.63).abs() < 5e-3);
        assert!(all.reject && all.statistic > KUPIEC_CRITICAL_05);
    }

    #[test]
    fn kupiec_grows_away_from_nominal() {
        let at = |hits| kupiec_test(hits, 200 - hits, 0.2).unwrap().statistic;
        assert_eq!(at(160), 0.0);
        for h in 160..200 {
            assert!(at(h + 1) > at(h));
        }
        for h in 1..=160 {
            assert!(at(h - 1) > at(h));
        }
    }

    #[test]
    fn winkler_cases() {
        assert_eq!(winkler_one(0.0, 10.0, 5.0, 0.2), 10.0);
        assert_eq!(winkler_one(0.0, 10.0, 12.0, 0.2), 30.0);
        assert_eq!(winkler_one(0.0, 10.0, -1.0, 0.2), 20.0);
        let w = winkler_score(&[0.0, 1.0], &[2.0, 5.0], &[1.0, 3.0], 0.4).unwrap();
        assert_eq!(w, 3.0);
        let shifted = winkler_score(&[7.0, 8.0], &[9.0, 12.0], &[8.0, 10.0], 0.4).unwrap();
        assert_eq!(w, shifted);
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mae(&[10.0, 12.0], &[11.0, 11.0]).unwrap(), 1.0);
    }

    #[test]
    fn daily_norm_values() {
        let e = array![[1.0, -2.0], [3.0, 4.0]];
        assert_eq!(daily_norm_loss(e.view(), 1.0).unwrap(), vec![3.0, 7.0]);
        assert_eq!(daily_norm_loss(e.view(), 2.0).unwrap()[1], 5.0);
    }

    #[test]
    fn dm_degenerate_and_antisymmetric() {
        let a = [1.0, 2.0, 3.0];
        assert!(matches!(dm_test(&a, &a), Err(Error::Degenerate(_))));
        let b = [0.5, 2.5, 2.0];
        let ab = dm_test(&a, &b).unwrap();
        let ba = dm_test(&b, &a).unwrap();
        assert_eq!(ab.statistic, -ba.statistic);
        assert_eq!(ab.p_left, ba.p_right);
    }

    #[test]
    fn dm_large_mean_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let a: Vec<f64> = (0..100).map(|_| 5.0 + noise.sample(&mut rng)).collect();
        let r = dm_test(&a, &[0.0; 100]).unwrap();
        assert!(r.statistic > 100.0 && r.p_right < 1e-12);
    }
}
