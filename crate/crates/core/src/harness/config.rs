//! Experiment configuration: flat `key = value` files plus flag overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covering::Cover;
use crate::geometry::ModelSpace;
use crate::lyons_sullivan::{check_radii, Level};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {msg}")]
    Value { key: String, value: String, msg: String },
    #[error("missing `experiment` (give a subcommand or an `experiment = ...` line)")]
    MissingExperiment,
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    FunctionDiscretization,
    TensorDiscretization,
    Holonomy,
    Transport,
    ExitSampling,
    Harnack,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::FunctionDiscretization,
        Experiment::TensorDiscretization,
        Experiment::Holonomy,
        Experiment::Transport,
        Experiment::ExitSampling,
        Experiment::Harnack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::FunctionDiscretization => "function-discretization",
            Experiment::TensorDiscretization => "tensor-discretization",
            Experiment::Holonomy => "holonomy",
            Experiment::Transport => "transport",
            Experiment::ExitSampling => "exit-sampling",
            Experiment::Harnack => "harnack",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment; expected one of {}", Experiment::ALL.map(|e| e.name()).join(", ")))
    }
}

fn parse_model(s: &str) -> Result<ModelSpace, String> {
    match s {
        "flat" => Ok(ModelSpace::Flat),
        "hyperbolic" => Ok(ModelSpace::Hyperbolic),
        _ => Err("expected `flat` or `hyperbolic`".into()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err("expected `json` or `csv`".into()),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        })
    }
}

/// Everything that determines an experiment's numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: ModelSpace,
    pub r_e: f64,
    pub r_v: f64,
    pub step: f64,
    pub n_runs: u64,
    pub truncation: f64,
    pub seed: u64,
    /// Exit samples per start radius for bundle density fits.
    pub fit_samples: u64,
    pub fit_modes: u64,
    pub fit_step: f64,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment, model: ModelSpace) -> Self {
        use Experiment::*;
        use ModelSpace::*;
        let (r_e, r_v, step, n_runs, truncation) = match (experiment, model) {
            (FunctionDiscretization, Hyperbolic) => (0.2, 0.5, 1e-3, 100_000, 8.0),
            (FunctionDiscretization, Flat) => (0.1, 0.2, 1e-4, 100_000, 10.0),
            (TensorDiscretization, Hyperbolic) => (0.2, 5.0, 1e-2, 10_000, 12.0),
            (TensorDiscretization, Flat) => (0.1, 0.2, 1e-4, 10_000, 10.0),
            (ExitSampling, Hyperbolic) => (0.2, 0.5, 1e-4, 10_000, 8.0),
            (ExitSampling, Flat) => (0.5, 1.0, 1e-4, 10_000, 10.0),
            (Harnack, Hyperbolic) => (0.2, 5.0, 1e-2, 1, 20.0),
            (Harnack, Flat) => (0.5, 1.0, 1e-3, 1, 10.0),
            (Holonomy | Transport, Hyperbolic) => (0.2, 0.5, 1e-3, 20, 8.0),
            (Holonomy | Transport, Flat) => (0.1, 0.2, 1e-4, 20, 10.0),
        };
        let (fit_samples, fit_modes, fit_step) = match model {
            Hyperbolic => (100_000, 4, 3e-2),
            Flat => (100_000, 8, if experiment == Harnack { 1e-3 } else { 1e-4 }),
        };
        ExperimentConfig { experiment, model, r_e, r_v, step, n_runs, truncation, seed: 1, fit_samples, fit_modes, fit_step }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} must be a positive number, got {v}")))
            }
        };
        positive("step", self.step)?;
        positive("fit_step", self.fit_step)?;
        positive("truncation", self.truncation)?;
        positive("re", self.r_e)?;
        positive("rv", self.r_v)?;
        if self.n_runs == 0 {
            return Err(ConfigError::Invalid("runs must be at least 1".into()));
        }
        if self.fit_samples == 0 || self.fit_modes == 0 {
            return Err(ConfigError::Invalid("fit_samples and fit_modes must be at least 1".into()));
        }
        if self.fit_modes > 64 {
            return Err(ConfigError::Invalid(format!("fit_modes = {} exceeds 64", self.fit_modes)));
        }
        if self.r_e >= self.r_v {
            return Err(ConfigError::Invalid(format!(
                "E_x must lie inside V_x: need re < rv (got re = {}, rv = {})",
                self.r_e, self.r_v
            )));
        }
        if self.model == ModelSpace::Hyperbolic && self.r_v > 20.0 {
            return Err(ConfigError::Invalid(format!("rv = {} exceeds the chart's usable range (20)", self.r_v)));
        }
        let level = match self.experiment {
            Experiment::FunctionDiscretization => Some(Level::Base),
            Experiment::TensorDiscretization => Some(Level::Bundle),
            _ => None,
        };
        if let Some(level) = level {
            check_radii(&Cover::new(self.model), self.r_e, self.r_v, level).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if self.truncation <= self.r_v {
                return Err(ConfigError::Invalid(format!(
                    "truncation = {} must exceed rv = {}",
                    self.truncation, self.r_v
                )));
            }
            // Chains reach distance truncation + rv from the origin.
            if self.model == ModelSpace::Hyperbolic && self.truncation + self.r_v > 20.0 {
                return Err(ConfigError::Invalid(format!(
                    "truncation + rv = {} exceeds the chart's usable range (20)",
                    self.truncation + self.r_v
                )));
            }
        }
        Ok(())
    }

    /// The config as `key = value` lines accepted by [`parse_config_str`].
    pub fn emit(&self) -> String {
        let model = match self.model {
            ModelSpace::Flat => "flat",
            ModelSpace::Hyperbolic => "hyperbolic",
        };
        format!(
            "experiment = {}\nmodel = {model}\nre = {}\nrv = {}\nstep = {}\nruns = {}\ntruncation = {}\nseed = {}\nfit_samples = {}\nfit_modes = {}\nfit_step = {}\n",
            self.experiment, self.r_e, self.r_v, self.step, self.n_runs, self.truncation, self.seed, self.fit_samples, self.fit_modes, self.fit_step
        )
    }
}

/// A validated experiment plus output options.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub config: ExperimentConfig,
    pub out: Option<PathBuf>,
    pub format: ReportFormat,
    pub threads: usize,
}

pub const KEYS: [&str; 14] = [
    "experiment", "model", "re", "rv", "step", "runs", "truncation", "seed", "fit_samples", "fit_modes", "fit_step", "out",
    "format", "threads",
];

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, msg: "expected `key = value`".into() })?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(ConfigError::UnknownKey(k.to_string()));
        }
        if v.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1, msg: format!("empty value for `{k}`") });
        }
        map.insert(k.to_string(), v.to_string());
    }
    Ok(map)
}

fn value_error(key: &str, value: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Value { key: key.into(), value: value.into(), msg: msg.into() }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v.parse().map_err(|_| value_error(key, v, "expected a number"))?;
    if !x.is_finite() {
        return Err(value_error(key, v, "expected a finite number"));
    }
    Ok(x)
}

/// Accepts plain integers and integral floats such as `1e5`.
fn parse_count(key: &str, v: &str) -> Result<u64, ConfigError> {
    if let Ok(n) = v.parse::<u64>() {
        return Ok(n);
    }
    let x = parse_f64(key, v)?;
    if x >= 0.0 && x.fract() == 0.0 && x <= 9.007_199_254_740_992e15 {
        Ok(x as u64)
    } else {
        Err(value_error(key, v, "expected a nonnegative integer"))
    }
}

/// Resolves key/value pairs (later sources already merged in) into settings.
pub fn resolve(map: &BTreeMap<String, String>) -> Result<Settings, ConfigError> {
    for k in map.keys() {
        if !KEYS.contains(&k.as_str()) {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
    }
    let get = |k: &str| map.get(k).map(String::as_str);
    let experiment = match get("experiment") {
        Some(v) => v.parse().map_err(|m: String| value_error("experiment", v, m))?,
        None => return Err(ConfigError::MissingExperiment),
    };
    let model = match get("model") {
        Some(v) => parse_model(v).map_err(|m| value_error("model", v, m))?,
        None => ModelSpace::Hyperbolic,
    };
    let mut c = ExperimentConfig::defaults(experiment, model);
    for (key, slot) in [("re", &mut c.r_e), ("rv", &mut c.r_v), ("step", &mut c.step), ("truncation", &mut c.truncation), ("fit_step", &mut c.fit_step)] {
        if let Some(v) = get(key) {
            *slot = parse_f64(key, v)?;
        }
    }
    for (key, slot) in [("runs", &mut c.n_runs), ("seed", &mut c.seed), ("fit_samples", &mut c.fit_samples), ("fit_modes", &mut c.fit_modes)] {
        if let Some(v) = get(key) {
            *slot = parse_count(key, v)?;
        }
    }
    let format = match get("format") {
        Some(v) => v.parse().map_err(|m: String| value_error("format", v, m))?,
        None => ReportFormat::Json,
    };
    let threads = match get("threads") {
        Some(v) => parse_count("threads", v)? as usize,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    if threads == 0 || threads > 1024 {
        return Err(ConfigError::Invalid(format!("threads must be in 1..=1024, got {threads}")));
    }
    c.validate()?;
    Ok(Settings { config: c, out: get("out").map(PathBuf::from), format, threads })
}

/// Parses a config text with no overrides.
pub fn parse_config_str(text: &str) -> Result<Settings, ConfigError> {
    resolve(&parse_pairs(text)?)
}

/// Reads an optional config file and applies `overrides` on top.
pub fn parse_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Settings, ConfigError> {
    let mut map = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.to_path_buf(), source })?;
            parse_pairs(&text)?
        }
        None => BTreeMap::new(),
    };
    for (k, v) in overrides {
        map.insert(k.clone(), v.clone());
    }
    resolve(&map)
}
