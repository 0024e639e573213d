use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use pepf_core::dataset::{CsvSchema, FeatureSpec};
use pepf_core::pipeline::BacktestConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Name of the effective-config echo written into every run directory.
pub const ECHO_FILE: &str = "config.effective.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Market CSV; a relative path is taken from the config file's directory.
    pub path: PathBuf,
    pub schema: CsvSchema,
    /// First and last delivery day kept, inclusive.
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::new(),
            schema: CsvSchema::default(),
            from: None,
            to: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Norm of the point-error loss in the DM test.
    pub dm_norm: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { dm_norm: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Keep a resumable checkpoint under `<dir>/checkpoint`.
    pub checkpoint: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs"),
            checkpoint: true,
        }
    }
}

/// Everything one backtest needs, read from a single TOML or JSON file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub features: FeatureSpec,
    pub backtest: BacktestConfig,
    pub evaluation: EvaluationConfig,
    pub output: OutputConfig,
}

fn section(name: &str) -> impl Fn(pepf_core::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("{name}: {e}"))
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.data.path.as_os_str().is_empty() {
            return Err(CliError::Config("data.path: missing".into()));
        }
        if let (Some(a), Some(b)) = (self.data.from, self.data.to) {
            if a > b {
                return Err(CliError::Config(format!("data.from: {a} is after data.to {b}")));
            }
        }
        for s in &self.features.exog {
            if !self.data.schema.exog.contains(&s.column) {
                return Err(CliError::Config(format!(
                    "features.exog: column `{}` is not listed in data.schema.exog",
                    s.column
                )));
            }
        }
        self.features.validate().map_err(section("features"))?;
        self.backtest.train.validate().map_err(section("backtest.train"))?;
        self.backtest
            .conformal
            .validate()
            .map_err(section("backtest.conformal"))?;
        self.backtest.validate().map_err(section("backtest"))?;
        if !(self.evaluation.dm_norm > 0.0) {
            return Err(CliError::Config("evaluation.dm_norm: must be positive".into()));
        }
        if self.output.dir.as_os_str().is_empty() {
            return Err(CliError::Config("output.dir: missing".into()));
        }
        Ok(())
    }

    /// Normalized TOML of the effective configuration.
    pub fn echo(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    /// Fill derived fields: exogenous columns named by the features, and
    /// relative paths made absolute from `base`.
    fn normalize(&mut self, base: &Path) {
        if self.data.schema.exog.is_empty() {
            for s in &self.features.exog {
                if !self.data.schema.exog.contains(&s.column) {
                    self.data.schema.exog.push(s.column.clone());
                }
            }
        }
        for p in [&mut self.data.path, &mut self.output.dir] {
            if !p.as_os_str().is_empty() && p.is_relative() {
                let joined = base.join(&*p);
                *p = std::path::absolute(&joined).unwrap_or(joined);
            }
        }
    }
}

/// Read, normalize and validate a config file. `.json` files are read as
/// JSON, anything else as TOML.
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let mut cfg = if is_json {
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize::<_, RunConfig>(de).map_err(|e| {
            let at = e.path().to_string();
            CliError::Config(format!("{}: {at}: {}", path.display(), e.into_inner()))
        })?
    } else {
        toml::from_str::<RunConfig>(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    };
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    cfg.normalize(&base);
    cfg.validate()?;
    log::debug!("effective config:\n{}", cfg.echo()?);
    Ok(cfg)
}
