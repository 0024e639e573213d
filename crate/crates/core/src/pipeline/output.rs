use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveTime};
use ndarray::Array2;

use super::BacktestOutput;
use crate::dataset::TIMESTAMP_FORMAT;
use crate::ensemble::{QuantileForecast, QuantileGrid};
use crate::error::{Error, Result};
use crate::evaluation::{dm_comparisons, evaluate_method, EvalReport};
use crate::HORIZON;

pub const FORECAST_FILE_PREFIX: &str = "forecasts_";

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn timestamp(date: NaiveDate, hour: usize) -> String {
    date.and_time(NaiveTime::from_hms_opt(hour as u32, 0, 0).expect("hour < 24"))
        .format(TIMESTAMP_FORMAT)
        .to_string()
}

fn plot_writer(dir: &Path, name: &str, labels: &[String]) -> Result<(PathBuf, csv::Writer<BufWriter<File>>)> {
    let path = dir.join(format!("plot_{name}.csv"));
    let mut w = csv::Writer::from_writer(create(&path)?);
    let mut header = vec!["time".to_string(), "realized".into()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    Ok((path, w))
}

/// Write per-method forecast and plot CSVs plus the full output as JSON.
///
/// `forecasts_<method>.csv`: `date,hour,timestamp,<levels>,realized,method`,
/// one row per delivery hour. `plot_<method>.csv`: `time,realized,<levels>`.
pub fn write_outputs(out: &BacktestOutput, dir: &Path) -> Result<()> {
    if out.records.is_empty() {
        return Err(Error::State("backtest produced no test days".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let labels: Vec<String> = (0..out.grid.len()).map(|k| out.grid.label(k)).collect();
    for &method in &out.methods {
        let name = method.name();
        let path = dir.join(format!("{FORECAST_FILE_PREFIX}{name}.csv"));
        let mut w = csv::Writer::from_writer(create(&path)?);
        let mut header = vec!["date".to_string(), "hour".into(), "timestamp".into()];
        header.extend(labels.iter().cloned());
        header.extend(["realized".to_string(), "method".into()]);
        w.write_record(&header)?;

        let (plot_path, mut pw) = plot_writer(dir, name, &labels)?;

        for r in &out.records {
            let Some(f) = r.forecast(method) else { continue };
            for h in 0..HORIZON {
                let ts = timestamp(r.date, h);
                let qs: Vec<String> = f.q.row(h).iter().map(|v| v.to_string()).collect();
                let mut row = vec![r.date.to_string(), h.to_string(), ts.clone()];
                row.extend(qs.iter().cloned());
                row.extend([r.realized[h].to_string(), name.to_string()]);
                w.write_record(&row)?;
                let mut prow = vec![ts, r.realized[h].to_string()];
                prow.extend(qs);
                pw.write_record(&prow)?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        pw.flush().map_err(|e| Error::io(&plot_path, e))?;
    }
    let json_path = dir.join("output.json");
    fs::write(&json_path, serde_json::to_string(out)?).map_err(|e| Error::io(&json_path, e))?;
    Ok(())
}

/// Evaluate every emitted method and compare them pairwise.
pub fn generate_report(out: &BacktestOutput, dm_norm: f64) -> Result<EvalReport> {
    let realized = out.realized();
    let methods: Vec<(String, Vec<QuantileForecast>)> = out
        .methods
        .iter()
        .map(|&m| (m.name().to_string(), out.forecasts(m)))
        .collect();
    report_from(&methods, realized, &out.grid, dm_norm)
}

fn report_from(
    methods: &[(String, Vec<QuantileForecast>)],
    realized: Array2<f64>,
    grid: &QuantileGrid,
    dm_norm: f64,
) -> Result<EvalReport> {
    let reports = methods
        .iter()
        .map(|(name, f)| evaluate_method(name, f, realized.view(), grid))
        .collect::<Result<Vec<_>>>()?;
    let dm = if methods.len() > 1 && realized.nrows() >= 2 {
        dm_comparisons(methods, realized.view(), grid, dm_norm)?
    } else {
        Vec::new()
    };
    Ok(EvalReport { methods: reports, dm })
}

/// `report.json`, `report.txt`, `metrics_<method>.json` and `dm_<score>.csv`.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let put = |name: String, text: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    put("report.json".into(), report.to_json()?)?;
    put("report.txt".into(), report.to_text())?;
    for m in &report.methods {
        put(format!("metrics_{}.json", m.method), serde_json::to_string_pretty(m)?)?;
    }
    for score in report.dm_scores() {
        let p = dir.join(format!("dm_{score}.csv"));
        report.write_dm_csv(&score, create(&p)?)?;
    }
    Ok(())
}

/// Forecasts read back from `forecasts_<method>.csv` files.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredForecasts {
    pub grid: QuantileGrid,
    pub methods: Vec<(String, Vec<QuantileForecast>)>,
    pub realized: Array2<f64>,
}

impl StoredForecasts {
    pub fn report(&self, dm_norm: f64) -> Result<EvalReport> {
        report_from(&self.methods, self.realized.clone(), &self.grid, dm_norm)
    }

    /// Write `plot_<method>.csv` for every stored method.
    pub fn write_plot_data(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let labels: Vec<String> = (0..self.grid.len()).map(|k| self.grid.label(k)).collect();
        for (name, days) in &self.methods {
            let (path, mut w) = plot_writer(dir, name, &labels)?;
            for (d, f) in days.iter().enumerate() {
                for h in 0..HORIZON {
                    let mut row = vec![timestamp(f.delivery_date, h), self.realized[[d, h]].to_string()];
                    row.extend(f.q.row(h).iter().map(|v| v.to_string()));
                    w.write_record(&row)?;
                }
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn parse_f64(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse {
        line,
        reason: format!("{}: `{s}` is not a number", path.display()),
    })
}

fn read_one(path: &Path) -> Result<(String, QuantileGrid, Vec<QuantileForecast>, Vec<[f64; HORIZON]>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let n = headers.len();
    if n < 6 || &headers[0] != "date" || &headers[n - 2] != "realized" || &headers[n - 1] != "method" {
        return Err(Error::Schema(format!("{} is not a forecast file", path.display())));
    }
    let levels = headers
        .iter()
        .skip(3)
        .take(n - 5)
        .map(|l| {
            l.strip_prefix('q')
                .and_then(|v| v.parse::<f64>().ok())
                .map(|v| v / 100.0)
                .ok_or_else(|| Error::Schema(format!("bad level column `{l}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = QuantileGrid::new(levels)?;
    let g = grid.len();
    let mut method = String::new();
    let mut days: Vec<QuantileForecast> = Vec::new();
    let mut realized: Vec<[f64; HORIZON]> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let date: NaiveDate = rec[0].parse().map_err(|_| Error::Parse {
            line,
            reason: format!("bad date `{}`", &rec[0]),
        })?;
        let hour: usize = rec[1].parse().map_err(|_| Error::Parse {
            line,
            reason: format!("bad hour `{}`", &rec[1]),
        })?;
        if hour >= HORIZON {
            return Err(Error::Parse {
                line,
                reason: format!("hour {hour} out of range"),
            });
        }
        if hour == 0 {
            days.push(QuantileForecast::new(date, Array2::from_elem((HORIZON, g), f64::NAN)));
            realized.push([f64::NAN; HORIZON]);
        }
        let (Some(day), Some(y)) = (days.last_mut(), realized.last_mut()) else {
            return Err(Error::Parse {
                line,
                reason: "day does not start at hour 0".into(),
            });
        };
        if day.delivery_date != date {
            return Err(Error::Parse {
                line,
                reason: format!("{date} hour {hour} interrupts {}", day.delivery_date),
            });
        }
        for k in 0..g {
            day.q[[hour, k]] = parse_f64(&rec[3 + k], path, line)?;
        }
        y[hour] = parse_f64(&rec[3 + g], path, line)?;
        method = rec[4 + g].to_string();
    }
    if days.is_empty() {
        return Err(Error::Coverage(format!("{} holds no forecasts", path.display())));
    }
    if days.iter().any(|d| d.q.iter().any(|v| v.is_nan())) || realized.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::Parse {
            line: 0,
            reason: format!("{} has incomplete days", path.display()),
        });
    }
    Ok((method, grid, days, realized))
}

/// Load every `forecasts_<method>.csv` in `dir`, sorted by method name.
pub fn read_forecasts(dir: &Path) -> Result<StoredForecasts> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(FORECAST_FILE_PREFIX) && n.ends_with(".csv"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Coverage(format!("no forecast files in {}", dir.display())));
    }
    let mut grid: Option<QuantileGrid> = None;
    let mut realized: Option<Vec<[f64; HORIZON]>> = None;
    let mut dates: Option<Vec<NaiveDate>> = None;
    let mut methods = Vec::new();
    for p in &paths {
        let (name, g, days, y) = read_one(p)?;
        let these: Vec<NaiveDate> = days.iter().map(|d| d.delivery_date).collect();
        match (&grid, &dates, &realized) {
            (Some(g0), Some(d0), Some(y0)) => {
                if *g0 != g || *d0 != these || *y0 != y {
                    return Err(Error::Schema(format!(
                        "{} disagrees with the other forecast files on levels, dates or prices",
                        p.display()
                    )));
                }
            }
            _ => {
                grid = Some(g);
                dates = Some(these);
                realized = Some(y);
            }
        }
        methods.push((name, days));
    }
    let y = realized.expect("at least one file");
    let realized = Array2::from_shape_fn((y.len(), HORIZON), |(d, h)| y[d][h]);
    Ok(StoredForecasts {
        grid: grid.expect("at least one file"),
        methods,
        realized,
    })
}
