//! Rolling daily-recalibration backtest.
//!
//! Every day from the start of the warm-up range onwards, the ensemble is
//! retrained on the preceding window, the day's quantiles are predicted, the
//! calibrated forecasts are emitted (test days only) and only then are the
//! realized prices scored into the conformal state.

mod output;

pub use output::{generate_report, read_forecasts, write_outputs, write_report, StoredForecasts, FORECAST_FILE_PREFIX};

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conformal::{conformalize_forecast, ConformalConfig, ConformalMethod, ConformalState};
use crate::dataset::{fit_scaler, SampleSet, ScalerState};
use crate::distributions::transform_head_outputs;
use crate::ensemble::{
    dist_to_quantiles, sort_quantiles_in_place, vincentize, ExtractionMode, QuantileForecast, QuantileGrid,
};
use crate::error::{Error, Result};
use crate::network::{train_member, validation_split, HeadKind, MlpParams, TrainConfig};
use crate::HORIZON;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub head: HeadKind,
    pub n_members: usize,
    /// Training window in days; `None` uses all history before the warm-up
    /// start and keeps that width while sliding.
    pub window_days: Option<usize>,
    pub warmup_days: usize,
    /// Test days at the end of the sample set; `None` runs to the end after
    /// one window and the warm-up.
    pub test_days: Option<usize>,
    pub train: TrainConfig,
    pub grid: QuantileGrid,
    pub conformal: ConformalConfig,
    pub methods: Vec<ConformalMethod>,
    pub seed: u64,
    pub extraction: ExtractionMode,
    /// Continue each member from the previous day's weights.
    pub warm_start: bool,
    /// Cap on parallel member trainings; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            head: HeadKind::JohnsonSu,
            n_members: 4,
            window_days: None,
            warmup_days: 182,
            test_days: None,
            train: TrainConfig::default(),
            grid: QuantileGrid::deciles(),
            conformal: ConformalConfig::default(),
            methods: ConformalMethod::ALL.to_vec(),
            seed: 0,
            extraction: ExtractionMode::Analytic,
            warm_start: false,
            threads: None,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.conformal.validate()?;
        if self.n_members == 0 {
            return Err(Error::Domain("n_members must be positive".into()));
        }
        if self.warmup_days == 0 {
            return Err(Error::Domain("warmup_days must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Domain("at least one method must be emitted".into()));
        }
        if let HeadKind::Quantile { grid } = &self.head {
            if grid != &self.grid {
                return Err(Error::Domain(
                    "quantile head grid differs from the forecast grid".into(),
                ));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Domain("threads must be positive".into()));
        }
        Ok(())
    }

    /// Stable hash of the configuration, hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(hex_digest(serde_json::to_string(self)?.as_bytes()))
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Resolved sample-index layout of a backtest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BacktestPlan {
    pub window: usize,
    pub warmup_start: usize,
    pub test_start: usize,
    pub end: usize,
}

impl BacktestPlan {
    pub fn new(n_samples: usize, cfg: &BacktestConfig) -> Result<Self> {
        let (warmup_start, test_start, end) = match (cfg.test_days, cfg.window_days) {
            (Some(t), _) => {
                let need = t + cfg.warmup_days;
                if t == 0 || need > n_samples {
                    return Err(Error::Coverage(format!(
                        "{n_samples} sample days cannot hold {} warm-up and {t} test days",
                        cfg.warmup_days
                    )));
                }
                (n_samples - need, n_samples - t, n_samples)
            }
            (None, Some(w)) => {
                let test_start = w + cfg.warmup_days;
                if test_start >= n_samples {
                    return Err(Error::Coverage(format!(
                        "{n_samples} sample days leave no test days after a {w}-day window and {}-day warm-up",
                        cfg.warmup_days
                    )));
                }
                (w, test_start, n_samples)
            }
            (None, None) => {
                return Err(Error::Domain(
                    "set window_days or test_days to fix the backtest range".into(),
                ))
            }
        };
        let window = cfg.window_days.unwrap_or(warmup_start);
        if window > warmup_start {
            return Err(Error::Coverage(format!(
                "a {window}-day window needs {window} days before the warm-up, only {warmup_start} available"
            )));
        }
        validation_split(window, cfg.train.validation_fraction)
            .map_err(|_| Error::Coverage(format!("a {window}-day training window is too short")))?;
        Ok(Self {
            window,
            warmup_start,
            test_start,
            end,
        })
    }

    pub fn test_days(&self) -> usize {
        self.end - self.test_start
    }
}

/// Calibrated forecast of one method for one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodForecast {
    pub method: ConformalMethod,
    pub q: Array2<f64>,
    pub fallbacks: usize,
}

/// Everything emitted for one test day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub date: NaiveDate,
    pub sample_index: usize,
    /// Delivery dates of the first and last training samples.
    pub train_first: NaiveDate,
    pub train_last: NaiveDate,
    pub forecasts: Vec<MethodForecast>,
    pub realized: Vec<f64>,
    pub best_epochs: Vec<usize>,
}

impl DayRecord {
    pub fn forecast(&self, method: ConformalMethod) -> Option<&MethodForecast> {
        self.forecasts.iter().find(|f| f.method == method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestOutput {
    pub config_hash: String,
    pub seed: u64,
    pub grid: QuantileGrid,
    pub methods: Vec<ConformalMethod>,
    pub plan: BacktestPlan,
    pub records: Vec<DayRecord>,
    /// Scores per CQR buffer when the first test forecast was made.
    pub buffer_len_at_test_start: usize,
    pub final_state: ConformalState,
    /// Excluded from [`BacktestOutput::content_digest`].
    pub wall_clock_secs: f64,
}

impl BacktestOutput {
    /// SHA-256 over everything except the wall-clock time.
    pub fn content_digest(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.wall_clock_secs = 0.0;
        Ok(hex_digest(serde_json::to_string(&copy)?.as_bytes()))
    }

    pub fn forecasts(&self, method: ConformalMethod) -> Vec<QuantileForecast> {
        self.records
            .iter()
            .filter_map(|r| r.forecast(method).map(|f| QuantileForecast::new(r.date, f.q.clone())))
            .collect()
    }

    pub fn realized(&self) -> Array2<f64> {
        let mut y = Array2::zeros((self.records.len(), HORIZON));
        for (d, r) in self.records.iter().enumerate() {
            for h in 0..HORIZON {
                y[[d, h]] = r.realized[h];
            }
        }
        y
    }
}

/// splitmix64 finalizer, used to derive independent member seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn member_seed(seed: u64, day: usize, member: usize) -> u64 {
    mix(mix(seed ^ mix(day as u64)) ^ member as u64)
}

/// Base quantiles for one member in price units, rows sorted.
fn member_quantiles(
    params: &MlpParams,
    x_day: &Array2<f64>,
    head: &HeadKind,
    grid: &QuantileGrid,
    scaler: &ScalerState,
    extraction: ExtractionMode,
) -> Result<Array2<f64>> {
    let raw = params.forward(x_day.view());
    let raw = raw.row(0).to_vec();
    let z = match head {
        HeadKind::Point => Array2::from_shape_fn((HORIZON, grid.len()), |(h, _)| raw[h]),
        HeadKind::Quantile { .. } => Array2::from_shape_fn((HORIZON, grid.len()), |(h, k)| raw[k * HORIZON + h]),
        _ => dist_to_quantiles(&transform_head_outputs(&raw, head)?, grid, extraction)?,
    };
    let mut q = scaler.invert_quantiles(z.view())?;
    sort_quantiles_in_place(&mut q);
    Ok(q)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    config_hash: String,
    next_day: usize,
    n_records: usize,
    buffer_len_at_test_start: usize,
    state: ConformalState,
    warm: Option<Vec<MlpParams>>,
}

const CHECKPOINT_FILE: &str = "checkpoint.json";
const RECORDS_FILE: &str = "records.jsonl";

fn read_records(path: &Path, n: usize) -> Result<Vec<DayRecord>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::with_capacity(n);
    for line in BufReader::new(f).lines().take(n) {
        let line = line.map_err(|e| Error::io(path, e))?;
        out.push(serde_json::from_str(&line)?);
    }
    if out.len() != n {
        return Err(Error::State(format!(
            "{} holds {} records, checkpoint expects {n}",
            path.display(),
            out.len()
        )));
    }
    Ok(out)
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Run the backtest over `data`. With `checkpoint_dir`, progress is saved
/// after every day and a later call with the same config resumes from it.
pub fn run_backtest(data: &SampleSet, cfg: &BacktestConfig, checkpoint_dir: Option<&Path>) -> Result<BacktestOutput> {
    cfg.validate()?;
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Domain(format!("thread pool: {e}")))?
            .install(|| run_days(data, cfg, checkpoint_dir)),
        None => run_days(data, cfg, checkpoint_dir),
    }
}

fn run_days(data: &SampleSet, cfg: &BacktestConfig, checkpoint_dir: Option<&Path>) -> Result<BacktestOutput> {
    let started = Instant::now();
    let plan = BacktestPlan::new(data.len(), cfg)?;
    let config_hash = cfg.hash()?;
    let (n_fit, _) = validation_split(plan.window, cfg.train.validation_fraction)?;

    let mut state = ConformalState::new(cfg.grid.clone(), cfg.conformal.clone())?;
    let mut records: Vec<DayRecord> = Vec::new();
    let mut warm: Option<Vec<MlpParams>> = None;
    let mut buffer_len_at_test_start = 0;
    let mut first_day = plan.warmup_start;

    let paths = checkpoint_dir.map(|d| -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        Ok((d.join(CHECKPOINT_FILE), d.join(RECORDS_FILE)))
    });
    let paths = paths.transpose()?;
    if let Some((ck_path, rec_path)) = &paths {
        if ck_path.exists() {
            let text = fs::read_to_string(ck_path).map_err(|e| Error::io(ck_path, e))?;
            let ck: Checkpoint = serde_json::from_str(&text)?;
            if ck.config_hash != config_hash {
                return Err(Error::State(format!(
                    "{} belongs to a different configuration",
                    ck_path.display()
                )));
            }
            records = read_records(rec_path, ck.n_records)?;
            state = ck.state;
            warm = ck.warm;
            buffer_len_at_test_start = ck.buffer_len_at_test_start;
            first_day = ck.next_day;
            log::info!("resuming at sample {first_day} with {} records", records.len());
        } else if rec_path.exists() {
            fs::remove_file(rec_path).map_err(|e| Error::io(rec_path, e))?;
        }
    }

    for d in first_day..plan.end {
        let date = data.dates[d];
        let w0 = d - plan.window;
        let scaler = fit_scaler(data, w0..w0 + n_fit)?;
        let x = scaler.apply_features(data.features.slice(s![w0..d, ..]))?;
        let y = scaler.apply_targets(data.targets.slice(s![w0..d, ..]))?;
        let x_day = scaler.apply_features(data.features.slice(s![d..d + 1, ..]))?;

        let trained = (0..cfg.n_members)
            .into_par_iter()
            .map(|m| {
                let mut tc = cfg.train.clone();
                tc.seed = member_seed(cfg.seed, d, m);
                let init = if cfg.warm_start {
                    warm.as_ref().map(|w| &w[m])
                } else {
                    None
                };
                train_member(x.view(), y.view(), &cfg.head, &tc, init).map_err(|e| Error::Training {
                    day: d,
                    reason: format!("member {m} on {date}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let member_q = trained
            .iter()
            .enumerate()
            .map(|(m, t)| {
                let extraction = match cfg.extraction {
                    ExtractionMode::MonteCarlo { n_samples, seed } => ExtractionMode::MonteCarlo {
                        n_samples,
                        seed: member_seed(seed, d, m),
                    },
                    other => other,
                };
                member_quantiles(&t.params, &x_day, &cfg.head, &cfg.grid, &scaler, extraction)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut base = vincentize(&member_q)?;
        sort_quantiles_in_place(&mut base);
        let realized: Vec<f64> = data.targets.row(d).to_vec();

        if d >= plan.test_start {
            if d == plan.test_start {
                buffer_len_at_test_start = state.lower_scores(0, 0).len();
                state.start_online()?;
            }
            let qf = QuantileForecast::new(date, base.clone());
            let forecasts = cfg
                .methods
                .iter()
                .map(|&method| {
                    let c = conformalize_forecast(&qf, &state, method, None)?;
                    Ok(MethodForecast {
                        method,
                        q: c.forecast.q,
                        fallbacks: c.fallbacks,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let record = DayRecord {
                date,
                sample_index: d,
                train_first: data.dates[w0],
                train_last: data.dates[d - 1],
                forecasts,
                realized: realized.clone(),
                best_epochs: trained.iter().map(|t| t.best_epoch).collect(),
            };
            if let Some((_, rec_path)) = &paths {
                let mut f = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(rec_path)
                    .map_err(|e| Error::io(rec_path, e))?;
                writeln!(f, "{}", serde_json::to_string(&record)?).map_err(|e| Error::io(rec_path, e))?;
            }
            records.push(record);
        }

        state.observe(base.view(), None, &realized)?;
        if cfg.warm_start {
            warm = Some(trained.into_iter().map(|t| t.params).collect());
        }
        if let Some((ck_path, _)) = &paths {
            let ck = Checkpoint {
                config_hash: config_hash.clone(),
                next_day: d + 1,
                n_records: records.len(),
                buffer_len_at_test_start,
                state: state.clone(),
                warm: warm.clone(),
            };
            write_atomic(ck_path, &serde_json::to_string(&ck)?)?;
        }
        log::info!(
            "{date}: {} ({}/{})",
            if d >= plan.test_start { "test" } else { "warm-up" },
            d + 1 - plan.warmup_start,
            plan.end - plan.warmup_start
        );
    }

    Ok(BacktestOutput {
        config_hash,
        seed: cfg.seed,
        grid: cfg.grid.clone(),
        methods: cfg.methods.clone(),
        plan,
        records,
        buffer_len_at_test_start,
        final_state: state,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// Mean per-α coverage averaged over hours and days for one method.
pub fn mean_coverage(out: &BacktestOutput, method: ConformalMethod) -> Vec<f64> {
    let pairs = out.grid.pairs();
    let mut hits = vec![0usize; pairs.len()];
    let mut n = 0usize;
    for r in &out.records {
        let Some(f) = r.forecast(method) else { continue };
        for h in 0..HORIZON {
            for (k, p) in pairs.iter().enumerate() {
                let y = r.realized[h];
                if f.q[[h, p.lower]] <= y && y <= f.q[[h, p.upper]] {
                    hits[k] += 1;
                }
            }
        }
        n += HORIZON;
    }
    hits.iter().map(|&c| c as f64 / n.max(1) as f64).collect()
}
