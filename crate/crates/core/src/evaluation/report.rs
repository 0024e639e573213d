use std::fmt::Write as _;
use std::io::Write;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{daily_norm_loss, dm_test, kupiec_test, mae, picp, pinball_report, winkler_one, KupiecResult};
use crate::ensemble::{median_column, QuantileForecast, QuantileGrid};
use crate::error::{ensure, Error, Result};
use crate::network::pinball_loss;
use crate::HORIZON;

/// Scores of one calibration method over a test period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub n_days: usize,
    /// Nominal miscoverage of each central PI, widest first.
    pub alphas: Vec<f64>,
    /// `picp[h][k]`: coverage at hour `h` of the PI with miscoverage `alphas[k]`.
    pub picp: Vec<Vec<f64>>,
    pub kupiec: Vec<Vec<KupiecResult>>,
    /// Coverage per α averaged over hours.
    pub mean_picp: Vec<f64>,
    pub winkler: Vec<f64>,
    pub pinball: f64,
    /// Of the median forecast.
    pub mae: f64,
}

impl MethodReport {
    /// Hours whose Kupiec test rejects at 5%, per α.
    pub fn kupiec_rejections(&self) -> Vec<usize> {
        (0..self.alphas.len())
            .map(|k| self.kupiec.iter().filter(|row| row[k].reject).count())
            .collect()
    }
}

/// One ordered comparison under one score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmEntry {
    pub score: String,
    pub model_a: String,
    pub model_b: String,
    /// `None` when the loss differentials are constant.
    pub statistic: Option<f64>,
    pub p_left: Option<f64>,
    pub p_right: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub methods: Vec<MethodReport>,
    pub dm: Vec<DmEntry>,
}

fn check_inputs(forecasts: &[QuantileForecast], realized: ArrayView2<f64>, grid: &QuantileGrid) -> Result<()> {
    ensure(!forecasts.is_empty() && forecasts.len() == realized.nrows(), || {
        format!("{} forecasts vs {} realized days", forecasts.len(), realized.nrows())
    })?;
    ensure(realized.ncols() == HORIZON, || {
        "realized prices must have 24 columns".into()
    })?;
    ensure(
        forecasts
            .iter()
            .all(|f| f.q.nrows() == HORIZON && f.q.ncols() == grid.len()),
        || "forecast shapes do not match the grid".into(),
    )
}

pub fn evaluate_method(
    method: &str,
    forecasts: &[QuantileForecast],
    realized: ArrayView2<f64>,
    grid: &QuantileGrid,
) -> Result<MethodReport> {
    check_inputs(forecasts, realized, grid)?;
    let pairs = grid.pairs();
    let n_days = forecasts.len();
    let mut picp_tab = vec![vec![0.0; pairs.len()]; HORIZON];
    let mut kupiec_tab = Vec::with_capacity(HORIZON);
    for h in 0..HORIZON {
        let y: Vec<f64> = realized.column(h).to_vec();
        let mut row = Vec::with_capacity(pairs.len());
        for (k, pair) in pairs.iter().enumerate() {
            let lo: Vec<f64> = forecasts.iter().map(|f| f.q[[h, pair.lower]]).collect();
            let hi: Vec<f64> = forecasts.iter().map(|f| f.q[[h, pair.upper]]).collect();
            let cov = picp(&lo, &hi, &y)?;
            picp_tab[h][k] = cov;
            let hits = (cov * n_days as f64).round() as usize;
            row.push(kupiec_test(hits, n_days - hits, pair.alpha)?);
        }
        kupiec_tab.push(row);
    }
    let mean_picp = (0..pairs.len())
        .map(|k| picp_tab.iter().map(|r| r[k]).sum::<f64>() / HORIZON as f64)
        .collect();
    let winkler = pairs
        .iter()
        .map(|pair| {
            let mut total = 0.0;
            for (f, y) in forecasts.iter().zip(realized.rows()) {
                for h in 0..HORIZON {
                    total += winkler_one(f.q[[h, pair.lower]], f.q[[h, pair.upper]], y[h], pair.alpha);
                }
            }
            total / (n_days * HORIZON) as f64
        })
        .collect();
    let medians: Vec<f64> = forecasts.iter().flat_map(|f| median_column(&f.q, grid)).collect();
    let flat_y: Vec<f64> = realized.iter().copied().collect();
    Ok(MethodReport {
        method: method.to_string(),
        n_days,
        alphas: pairs.iter().map(|p| p.alpha).collect(),
        picp: picp_tab,
        kupiec: kupiec_tab,
        mean_picp,
        winkler,
        pinball: pinball_report(forecasts, realized, grid.levels())?,
        mae: mae(&flat_y, &medians)?,
    })
}

/// Per-day losses under every compared score: pinball and Winkler summed
/// over hours, and the `norm`-aggregated absolute error of the median.
fn daily_losses(
    forecasts: &[QuantileForecast],
    realized: ArrayView2<f64>,
    grid: &QuantileGrid,
    norm: f64,
) -> Result<Vec<(String, Vec<f64>)>> {
    let mut out = Vec::new();
    let mut pin = Vec::with_capacity(forecasts.len());
    for (f, y) in forecasts.iter().zip(realized.rows()) {
        let y = y.to_vec();
        pin.push(pinball_loss(f.q.view(), &y, grid.levels())? * HORIZON as f64);
    }
    out.push(("pinball".to_string(), pin));
    for pair in grid.pairs() {
        let w = forecasts
            .iter()
            .zip(realized.rows())
            .map(|(f, y)| {
                (0..HORIZON)
                    .map(|h| winkler_one(f.q[[h, pair.lower]], f.q[[h, pair.upper]], y[h], pair.alpha))
                    .sum()
            })
            .collect();
        out.push((format!("winkler_{:.2}", pair.alpha), w));
    }
    let errors = Array2::from_shape_fn((forecasts.len(), HORIZON), |(d, h)| {
        realized[[d, h]] - forecasts[d].q[[h, grid.median_index()]]
    });
    out.push(("mae".to_string(), daily_norm_loss(errors.view(), norm)?));
    Ok(out)
}

/// DM tests for every ordered pair of methods under each score.
pub fn dm_comparisons(
    methods: &[(String, Vec<QuantileForecast>)],
    realized: ArrayView2<f64>,
    grid: &QuantileGrid,
    norm: f64,
) -> Result<Vec<DmEntry>> {
    let losses = methods
        .iter()
        .map(|(_, f)| {
            check_inputs(f, realized, grid)?;
            daily_losses(f, realized, grid, norm)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    let n_scores = losses.first().map_or(0, Vec::len);
    for s in 0..n_scores {
        for (i, (a, _)) in methods.iter().enumerate() {
            for (j, (b, _)) in methods.iter().enumerate() {
                if i == j {
                    continue;
                }
                let (score, la) = &losses[i][s];
                let lb = &losses[j][s].1;
                let r = match dm_test(la, lb) {
                    Ok(r) => Some(r),
                    Err(Error::Degenerate(_)) => None,
                    Err(e) => return Err(e),
                };
                out.push(DmEntry {
                    score: score.clone(),
                    model_a: a.clone(),
                    model_b: b.clone(),
                    statistic: r.map(|r| r.statistic),
                    p_left: r.map(|r| r.p_left),
                    p_right: r.map(|r| r.p_right),
                });
            }
        }
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

impl EvalReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Distinct score names in the DM table, in first-seen order.
    pub fn dm_scores(&self) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        for e in &self.dm {
            if !seen.contains(&e.score) {
                seen.push(e.score.clone());
            }
        }
        seen
    }

    /// Long-format CSV of the DM results for one score.
    pub fn write_dm_csv<W: Write>(&self, score: &str, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["model_a", "model_b", "stat", "p_left", "p_right"])?;
        for e in self.dm.iter().filter(|e| e.score == score) {
            w.write_record([
                e.model_a.clone(),
                e.model_b.clone(),
                opt(e.statistic),
                opt(e.p_left),
                opt(e.p_right),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<dm csv>", e))?;
        Ok(())
    }

    /// Aligned plain-text summary.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let Some(first) = self.methods.first() else {
            return s;
        };
        let alpha_cols: Vec<String> = first
            .alphas
            .iter()
            .map(|a| format!("{:.0}%", (1.0 - a) * 100.0))
            .collect();
        let _ = writeln!(s, "Mean PICP over hours (nominal coverage in header)");
        let _ = write!(s, "{:<8}", "method");
        for c in &alpha_cols {
            let _ = write!(s, "{c:>10}");
        }
        let _ = writeln!(s);
        for m in &self.methods {
            let _ = write!(s, "{:<8}", m.method);
            for v in &m.mean_picp {
                let _ = write!(s, "{v:>10.4}");
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s, "\nHours failing Kupiec at 5% (of {HORIZON})");
        let _ = write!(s, "{:<8}", "method");
        for c in &alpha_cols {
            let _ = write!(s, "{c:>10}");
        }
        let _ = writeln!(s);
        for m in &self.methods {
            let _ = write!(s, "{:<8}", m.method);
            for v in m.kupiec_rejections() {
                let _ = write!(s, "{v:>10}");
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s, "\nScores");
        let _ = write!(s, "{:<8}{:>10}{:>10}", "method", "pinball", "mae");
        for a in &first.alphas {
            let _ = write!(s, "{:>10}", format!("W{a:.1}"));
        }
        let _ = writeln!(s);
        for m in &self.methods {
            let _ = write!(s, "{:<8}{:>10.4}{:>10.4}", m.method, m.pinball, m.mae);
            for w in &m.winkler {
                let _ = write!(s, "{w:>10.3}");
            }
            let _ = writeln!(s);
        }
        if !self.dm.is_empty() {
            let _ = writeln!(s, "\nDiebold-Mariano (Δ = loss_a − loss_b)");
            let _ = writeln!(
                s,
                "{:<14}{:<8}{:<8}{:>10}{:>10}{:>10}",
                "score", "a", "b", "stat", "p_left", "p_right"
            );
            for e in &self.dm {
                let f = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |x| format!("{x:.p$}"));
                let _ = writeln!(
                    s,
                    "{:<14}{:<8}{:<8}{:>10}{:>10}{:>10}",
                    e.score,
                    e.model_a,
                    e.model_b,
                    f(e.statistic, 3),
                    f(e.p_left, 4),
                    f(e.p_right, 4)
                );
            }
        }
        s
    }
}
