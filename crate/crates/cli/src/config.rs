//! Run configuration, read from a TOML file.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Each subcommand reads its own section and fails with a config error
//! when that section is missing.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use hidden_events_core::binning::BinOptions;
use hidden_events_core::calendar::{Calendar, CovariateSpec, Effect, Epoch, HolidayCalendar};
use hidden_events_core::chainladder::{Anchor, Grid};
use hidden_events_core::likelihood::FitOptions;
use hidden_events_core::simulate::{ScenarioConfig, ScenarioId};
use hidden_events_core::timechange::{TailRule, TimeChangedDistribution};
use serde::{Deserialize, Serialize};

use crate::{io, CliError};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub calendar: CalendarConfig,
    pub data: Option<DataConfig>,
    pub model: Option<ModelConfig>,
    pub simulate: Option<ScenarioSection>,
    pub fit: Option<FitSection>,
    pub bins: Option<BinsSection>,
    pub predict: Option<PredictSection>,
    pub backtest: Option<BacktestSection>,
    pub chainladder: Option<ChainLadderSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalendarConfig {
    #[serde(default = "default_epoch")]
    pub epoch: NaiveDate,
    /// Holiday file; without one the built-in Dutch calendar for
    /// `generated_years` is used.
    pub holidays: Option<PathBuf>,
    #[serde(default = "default_years")]
    pub generated_years: (i32, i32),
}

fn default_epoch() -> NaiveDate {
    Epoch::default().origin()
}

fn default_years() -> (i32, i32) {
    (1990, 2040)
}

impl Default for CalendarConfig {
    fn default() -> Self {
        CalendarConfig {
            epoch: default_epoch(),
            holidays: None,
            generated_years: default_years(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub events: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub effects: Vec<Effect>,
    /// Family of `Ũ`; for the lognormal, `sigma` is the starting value.
    pub distribution: TimeChangedDistribution,
    #[serde(default)]
    pub fit: FitOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub scenario: ScenarioId,
    pub scale: Scale,
    /// Required by `simulate`. In a backtest, leaving it out simulates
    /// separate data for each evaluation date, ending `gap` days after it.
    pub last_occurrence: Option<NaiveDate>,
    pub first_occurrence: Option<NaiveDate>,
}

impl ScenarioSection {
    pub fn scenario_config(&self, seed: u64) -> Result<ScenarioConfig, CliError> {
        let last = self
            .last_occurrence
            .ok_or_else(|| CliError::Config("scenario needs last_occurrence".into()))?;
        Ok(self.scenario_config_ending(last, seed))
    }

    pub fn scenario_config_ending(&self, last: NaiveDate, seed: u64) -> ScenarioConfig {
        let mut cfg = match self.scale {
            Scale::Desk => ScenarioConfig::desk_scale(self.scenario, last, seed),
            Scale::Full => ScenarioConfig::full_scale(self.scenario, last, seed),
        };
        if let Some(f) = self.first_occurrence {
            cfg.first_occurrence = f;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// Triangle date; defaults to the last observation in the data.
    pub computation_date: Option<NaiveDate>,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinsSection {
    pub computation_date: Option<NaiveDate>,
    #[serde(default)]
    pub options: BinOptions,
}

/// Prediction horizon as written in the config: either a date or the tail
/// rule (the default).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonConfig {
    pub through: Option<NaiveDate>,
    #[serde(default)]
    pub tail: TailRule,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        HorizonConfig {
            through: None,
            tail: TailRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSection {
    pub eval_date: NaiveDate,
    #[serde(default = "default_gap")]
    pub gap: u32,
    #[serde(default)]
    pub horizon: HorizonConfig,
    #[serde(default = "default_floor")]
    pub reliability_floor: f64,
}

fn default_gap() -> u32 {
    5
}

fn default_floor() -> f64 {
    1e-4
}

fn default_one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DateRange {
    pub from: NaiveDate,
    pub to: NaiveDate,
    #[serde(default = "default_one")]
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodConfig {
    Granular {
        name: String,
        #[serde(default)]
        effects: Vec<Effect>,
        /// Prepend the scenario's own exposure effects.
        #[serde(default)]
        scenario_effects: bool,
        /// Append delay bins proposed on the first dataset.
        auto_bins: Option<BinOptions>,
        distribution: TimeChangedDistribution,
        #[serde(default)]
        fit: FitOptions,
    },
    ChainLadder {
        name: String,
        grid: Grid,
        #[serde(default)]
        anchor: Anchor,
    },
}

impl MethodConfig {
    pub fn name(&self) -> &str {
        match self {
            MethodConfig::Granular { name, .. } | MethodConfig::ChainLadder { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestSection {
    #[serde(default)]
    pub eval_dates: Vec<NaiveDate>,
    pub eval_range: Option<DateRange>,
    #[serde(default = "default_gap")]
    pub gap: u32,
    #[serde(default = "default_one")]
    pub refit_every: usize,
    #[serde(default)]
    pub horizon: HorizonConfig,
    #[serde(default = "default_floor")]
    pub reliability_floor: f64,
    /// Simulated replications; without a scenario the `[data]` events are
    /// used once.
    pub scenario: Option<ScenarioSection>,
    #[serde(default = "default_one")]
    pub replications: usize,
    pub methods: Vec<MethodConfig>,
}

impl BacktestSection {
    pub fn dates(&self) -> Result<Vec<NaiveDate>, CliError> {
        let mut out = self.eval_dates.clone();
        if let Some(r) = &self.eval_range {
            if r.step == 0 || r.from > r.to {
                return Err(CliError::Config("eval_range needs from <= to and step >= 1".into()));
            }
            let mut d = r.from;
            while d <= r.to {
                out.push(d);
                d = d + chrono::Days::new(r.step as u64);
            }
        }
        if out.is_empty() {
            return Err(CliError::Config("backtest needs eval_dates or eval_range".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainLadderSection {
    pub eval_date: NaiveDate,
    pub grid: Grid,
    #[serde(default)]
    pub anchor: Anchor,
}

/// A parsed config together with its source, for hashing and relative
/// paths.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub sha256: String,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Self::from_str(&text, base_dir)
    }

    pub fn from_str(text: &str, base_dir: PathBuf) -> Result<Self, CliError> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(LoadedConfig {
            config,
            base_dir,
            sha256: sha256_hex(text.as_bytes()),
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn calendar(&self) -> Result<Calendar, CliError> {
        let c = &self.config.calendar;
        let holidays = match &c.holidays {
            Some(p) => io::read_holidays(&self.resolve(p))?,
            None => {
                let (a, b) = c.generated_years;
                if a > b {
                    return Err(CliError::Config("generated_years must be ascending".into()));
                }
                HolidayCalendar::dutch(a, b)
            }
        };
        Ok(Calendar::new(Epoch::new(c.epoch), holidays))
    }

    pub fn events_path(&self) -> Result<PathBuf, CliError> {
        self.config
            .data
            .as_ref()
            .map(|d| self.resolve(&d.events))
            .ok_or_else(|| CliError::Config("missing [data] section".into()))
    }

    pub fn model(&self) -> Result<(CovariateSpec, &ModelConfig), CliError> {
        let m = self
            .config
            .model
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [model] section".into()))?;
        let spec = CovariateSpec::new(m.effects.clone())
            .map_err(|e| CliError::Config(format!("model effects: {e}")))?;
        Ok((spec, m))
    }
}

pub fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    s.as_ref()
        .ok_or_else(|| CliError::Config(format!("missing [{name}] section")))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
