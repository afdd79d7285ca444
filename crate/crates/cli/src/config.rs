//! Experiment configuration: a TOML file with one table per command, then
//! command-line overrides.

use std::path::{Path, PathBuf};

use dynbv_core::analytic::SeriesConfig;
use dynbv_core::drift::DEFAULT_CAP;
use dynbv_core::{EaParams, FitnessMode};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Grid keys accept a bare value as a one-point grid.
fn one_or_many<'de, D, T>(d: D) -> Result<Vec<T>, D::Error>
where
    D: serde::Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Grid<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match Grid::deserialize(d)? {
        Grid::One(x) => vec![x],
        Grid::Many(v) => v,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
    Svg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Drift,
    Analytic,
    OracleCheck,
    Runtime,
    Threshold,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Drift => "drift",
            Self::Analytic => "analytic",
            Self::OracleCheck => "oracle-check",
            Self::Runtime => "runtime",
            Self::Threshold => "threshold",
        }
    }
}

/// Algorithm parameters shared by the simulation commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EaSection {
    pub n: usize,
    pub mu: usize,
    pub c: f64,
    pub crossover_prob: f64,
    /// `dynbv` or a weight distribution such as `exp:1` or `geom:0.5`.
    pub fitness: String,
}

impl Default for EaSection {
    fn default() -> Self {
        Self {
            n: 3000,
            mu: 2,
            c: 1.0,
            crossover_prob: 0.0,
            fitness: "dynbv".into(),
        }
    }
}

impl EaSection {
    pub fn params(&self) -> Result<EaParams, CliError> {
        let fitness: FitnessMode = self.fitness.parse().map_err(CliError::config)?;
        let p = EaParams {
            n: self.n,
            mu: self.mu,
            c: self.c,
            crossover_prob: self.crossover_prob,
            fitness,
        };
        p.validate().map_err(CliError::config)?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftSection {
    #[serde(deserialize_with = "one_or_many")]
    pub c: Vec<f64>,
    #[serde(deserialize_with = "one_or_many")]
    pub eps: Vec<f64>,
}

impl Default for DriftSection {
    fn default() -> Self {
        Self {
            c: vec![2.0, 2.2, 2.4],
            eps: vec![0.005, 0.01, 0.05, 0.1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticSection {
    #[serde(deserialize_with = "one_or_many")]
    pub c: Vec<f64>,
    pub terms: usize,
    pub tail_target: f64,
}

impl Default for AnalyticSection {
    fn default() -> Self {
        let s = SeriesConfig::default();
        Self {
            c: (2..=12).map(|i| f64::from(i) * 0.25).collect(),
            terms: s.terms,
            tail_target: s.tail_target,
        }
    }
}

impl AnalyticSection {
    pub fn series(&self) -> SeriesConfig {
        SeriesConfig {
            terms: self.terms,
            tail_target: self.tail_target,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub max_r: usize,
    pub max_k: usize,
    pub max_accept_r: usize,
    pub max_symmetry_r: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            max_r: 4,
            max_k: 4,
            max_accept_r: 8,
            max_symmetry_r: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeSection {
    #[serde(deserialize_with = "one_or_many")]
    pub n: Vec<usize>,
    pub start_eps: f64,
    /// Budget per run is `budget_factor * n * ln n` generations.
    pub budget_factor: f64,
}

impl Default for RuntimeSection {
    fn default() -> Self {
        Self {
            n: vec![100, 200, 400, 800],
            start_eps: 0.1,
            budget_factor: 50.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSection {
    pub eps: f64,
    pub lo: f64,
    pub hi: f64,
    /// Stop once the bracket is this narrow.
    pub tolerance: f64,
    /// Largest trial count spent on one point before calling it undecided.
    pub max_trials: u64,
    /// Standard errors the mean must clear to count as a sign.
    pub z: f64,
}

impl Default for ThresholdSection {
    fn default() -> Self {
        Self {
            eps: 0.005,
            lo: 1.0,
            hi: 4.0,
            tolerance: 0.02,
            max_trials: 64_000_000,
            z: 3.0,
        }
    }
}

/// Everything one run depends on besides the binary itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Option<CommandKind>,
    pub seed: Option<u64>,
    pub trials: u64,
    pub threads: Option<usize>,
    pub cap: u64,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub ea: EaSection,
    pub drift: DriftSection,
    pub analytic: AnalyticSection,
    pub oracle_check: OracleSection,
    pub runtime: RuntimeSection,
    pub threshold: ThresholdSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            command: None,
            seed: None,
            trials: 100_000,
            threads: None,
            cap: DEFAULT_CAP,
            out: None,
            format: OutputFormat::Csv,
            ea: EaSection::default(),
            drift: DriftSection::default(),
            analytic: AnalyticSection::default(),
            oracle_check: OracleSection::default(),
            runtime: RuntimeSection::default(),
            threshold: ThresholdSection::default(),
        }
    }
}

fn parse_override(raw: &str) -> Result<(Vec<String>, toml::Value), CliError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{raw}` is not KEY=VALUE")))?;
    let path: Vec<String> = key.trim().split('.').map(|s| s.replace('-', "_")).collect();
    let value = value.trim();
    // Parse as a TOML value; bare words become strings and comma lists arrays.
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .or_else(|| {
            value.contains(',').then(|| {
                toml::from_str::<toml::Table>(&format!("v = [{value}]"))
                    .ok()
                    .and_then(|mut t| t.remove("v"))
            })?
        })
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((path, parsed))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads `path` (if any) and applies `section.key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| CliError::Config(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        for raw in overrides {
            let (path, value) = parse_override(raw)?;
            let (last, parents) = path.split_last().expect("split yields one item");
            let mut cur = &mut table;
            for p in parents {
                cur = cur
                    .entry(p.clone())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| CliError::Config(format!("`{p}` is not a section")))?;
            }
            cur.insert(last.clone(), value);
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
    }

    /// The `[ea]` parameters with `n` replaced.
    pub fn ea_for_n(&self, n: usize) -> Result<EaParams, CliError> {
        EaSection { n, ..self.ea.clone() }.params()
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("a master seed is required (--seed or `seed` in the config)".into()))
    }
}
