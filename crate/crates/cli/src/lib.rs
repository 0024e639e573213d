//! Command-line front end: config parsing, subcommands and exit codes.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use pepf_core::dataset::{
    build_sample_matrix, generate_synthetic_series, parse_market_csv, write_market_csv, NoiseKind, ScaleShift,
    SyntheticConfig,
};
use pepf_core::pipeline::{generate_report, read_forecasts, run_backtest, write_outputs, write_report, BacktestPlan};

mod config;

pub use config::{parse_config, DataConfig, EvaluationConfig, OutputConfig, RunConfig, ECHO_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or an invalid config file.
    #[error("{0}")]
    Config(String),
    /// Missing or unreadable input.
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] pepf_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_USAGE,
            CliError::Input(_) => EXIT_DATA,
            CliError::Core(e) if e.is_data_error() => EXIT_DATA,
            CliError::Core(_) => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "pepf",
    version,
    about = "Probabilistic day-ahead electricity price forecasting backtests"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic hourly market CSV (timestamp, price, load).
    Simulate(SimulateArgs),
    /// Run a rolling backtest from a config file.
    Run(RunArgs),
    /// Recompute metrics and DM tests from stored forecast CSVs.
    Evaluate(EvaluateArgs),
    /// Print metric tables and write plot-data CSVs from stored forecasts.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NoiseArg {
    Gaussian,
    Skewed,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 400)]
    pub days: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value = "2020-01-01")]
    pub start: NaiveDate,
    #[arg(long, default_value_t = 5.0)]
    pub noise_scale: f64,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub noise: NoiseArg,
    /// Day from which the noise scale is multiplied by `--shift-factor`.
    #[arg(long, requires = "shift_factor")]
    pub shift_day: Option<usize>,
    #[arg(long, requires = "shift_day")]
    pub shift_factor: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    /// Cap on parallel member trainings.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory, overriding `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Market CSV, overriding `data.path`.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory holding `forecasts_<method>.csv` files.
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub dm_norm: f64,
    /// Where to write the report files; defaults to `--dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = SyntheticConfig {
        days: args.days,
        seed: args.seed,
        start: args.start,
        noise_scale: args.noise_scale,
        noise: match args.noise {
            NoiseArg::Gaussian => NoiseKind::Gaussian,
            NoiseArg::Skewed => NoiseKind::Skewed,
        },
        shift: args
            .shift_day
            .zip(args.shift_factor)
            .map(|(day, factor)| ScaleShift { day, factor }),
        ..Default::default()
    };
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let (raw, _) = generate_synthetic_series(&cfg)?;
    match &args.output {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            }
            write_market_csv(&raw, File::create(p).map_err(|e| io_err(p, e))?)?;
            log::info!("wrote {} days to {}", args.days, p.display());
        }
        None => write_market_csv(&raw, io::stdout().lock())?,
    }
    Ok(())
}

/// Apply flag overrides on top of a parsed config.
pub fn apply_overrides(cfg: &mut RunConfig, args: &RunArgs) -> Result<(), CliError> {
    if let Some(t) = args.threads {
        cfg.backtest.threads = Some(t);
    }
    if let Some(s) = args.seed {
        cfg.backtest.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.output.dir = o.clone();
    }
    if let Some(d) = &args.data {
        cfg.data.path = d.clone();
    }
    cfg.validate()
}

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let mut cfg = parse_config(&args.config)?;
    apply_overrides(&mut cfg, args)?;
    let out_dir = cfg.output.dir.clone();

    let raw = parse_market_csv(&cfg.data.path, &cfg.data.schema)?;
    let range = match (cfg.data.from, cfg.data.to) {
        (None, None) => None,
        (from, to) => Some((from.unwrap_or(NaiveDate::MIN), to.unwrap_or(NaiveDate::MAX))),
    };
    let samples = build_sample_matrix(&raw, &cfg.features, range)?;
    match BacktestPlan::new(samples.len(), &cfg.backtest) {
        Err(pepf_core::Error::Domain(m)) => return Err(CliError::Config(format!("backtest: {m}"))),
        r => {
            let plan = r?;
            log::info!(
                "{} sample days: window {}, warm-up from {}, {} test days",
                samples.len(),
                plan.window,
                plan.warmup_start,
                plan.test_days()
            );
        }
    }

    fs::create_dir_all(&out_dir).map_err(|e| io_err(&out_dir, e))?;
    let echo_path = out_dir.join(ECHO_FILE);
    fs::write(&echo_path, cfg.echo()?).map_err(|e| io_err(&echo_path, e))?;

    let ck = cfg.output.checkpoint.then(|| out_dir.join("checkpoint"));
    let out = run_backtest(&samples, &cfg.backtest, ck.as_deref())?;
    write_outputs(&out, &out_dir)?;
    let report = generate_report(&out, cfg.evaluation.dm_norm)?;
    write_report(&report, &out_dir)?;
    print!("{}", report.to_text());
    log::info!(
        "{} test days in {:.1}s, outputs in {}",
        out.records.len(),
        out.wall_clock_secs,
        out_dir.display()
    );
    Ok(())
}

fn check_dir(dir: &Path) -> Result<(), CliError> {
    if !dir.is_dir() {
        return Err(CliError::Input(format!("{} is not a directory", dir.display())));
    }
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    check_dir(&args.dir)?;
    if !(args.dm_norm > 0.0) {
        return Err(CliError::Config("--dm-norm must be positive".into()));
    }
    let stored = read_forecasts(&args.dir)?;
    let report = stored.report(args.dm_norm)?;
    write_report(&report, args.out.as_deref().unwrap_or(&args.dir))?;
    print!("{}", report.to_text());
    Ok(())
}

pub fn report(args: &ReportArgs) -> Result<(), CliError> {
    check_dir(&args.dir)?;
    let stored = read_forecasts(&args.dir)?;
    let out = args.out.as_deref().unwrap_or(&args.dir);
    stored.write_plot_data(out)?;
    let text = stored.report(1.0)?.to_text();
    let path = out.join("report.txt");
    fs::write(&path, &text).map_err(|e| io_err(&path, e))?;
    print!("{text}");
    Ok(())
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Run(a) => run(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
    }
}

/// Parse `argv`, run the command and return the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(()) => {
            let _ = io::stdout().flush();
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
