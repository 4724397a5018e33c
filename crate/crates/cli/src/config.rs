//! Flat `key = value` scenario files (TOML syntax) with command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use capacity_rct::power::{DEFAULT_GAMMA, DEFAULT_SEARCH_CAP, DEFAULT_SQRT_STEP};
use capacity_rct::sim::DEFAULT_RESAMPLES;
use capacity_rct::{InitialState, ModelParams, TestConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Every recognised key with a one-line description; each is also a `--key`
/// flag.
pub const KEYS: &[(&str, &str)] = &[
    ("lambda", "rate at which a user leaves the desired state"),
    ("tau", "unassisted recovery rate"),
    ("mu", "service rate per server"),
    ("p", "probability that a completed service restores the user"),
    ("alpha", "significance level [default 0.05]"),
    ("beta", "target power [default 0.8]"),
    ("horizon", "trial length T used for variances and power [default 10]"),
    ("m1p", "pilot servers"),
    ("n1p", "pilot treatment users"),
    ("n0p", "pilot control users [default n1p]"),
    ("m1", "treatment servers"),
    ("n1", "treatment users"),
    ("n0", "control users [default n1]"),
    ("m", "servers of a single system"),
    ("n", "users of a single system"),
    ("pairs", "list of [servers, users] systems, e.g. [[2, 10], [5, 20]]"),
    ("gamma", "square-root staffing constant [default 0.5]"),
    ("search_cap", "largest N1 a policy may choose [default 10000]"),
    ("sqrt_step", "grid step of the square-root policy from the pilot N1 [default 4]"),
    ("n_min", "smallest total N of a sweep (even) [default 2]"),
    ("n_max", "largest total N of a sweep"),
    ("n_step", "step of total N in a sweep (even) [default 2]"),
    ("m_list", "treatment server counts of a sweep, e.g. [5, 10, 20]"),
    ("vary", "parameter varied by sweep-optimal-n: lambda, tau, mu or p"),
    ("values", "values taken by the varied parameter"),
    ("mbar", "servers-per-user ratio of the fluid model"),
    ("z0", "initial undesired fraction of a fluid trajectory"),
    ("fluid_horizon", "length of the fluid trajectory; omit for no trajectory"),
    ("fluid_step", "fluid integration step [default 0.01]"),
    ("seed", "simulation seed [default 0]"),
    ("replications", "simulation replications [default 500]"),
    ("sim_horizon", "simulated time [default: last checkpoint]"),
    ("checkpoint_times", "times at which simulated averages are reported"),
    ("initial_queue", "starting queue length, or \"stationary\" [default 0]"),
    ("level", "bootstrap confidence level [default 0.95]"),
    ("resamples", "bootstrap resamples [default 10000]"),
    ("format", "csv or json [default csv]"),
    ("out", "output directory [default .]"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialQueue {
    Count(u32),
    Named(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub lambda: Option<f64>,
    pub tau: Option<f64>,
    pub mu: Option<f64>,
    pub p: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub horizon: Option<f64>,
    pub m1p: Option<u32>,
    pub n1p: Option<u32>,
    pub n0p: Option<u32>,
    pub m1: Option<u32>,
    pub n1: Option<u32>,
    pub n0: Option<u32>,
    pub m: Option<u32>,
    pub n: Option<u32>,
    pub pairs: Option<Vec<[u32; 2]>>,
    pub gamma: Option<f64>,
    pub search_cap: Option<u32>,
    pub sqrt_step: Option<u32>,
    pub n_min: Option<u32>,
    pub n_max: Option<u32>,
    pub n_step: Option<u32>,
    pub m_list: Option<Vec<u32>>,
    pub vary: Option<String>,
    pub values: Option<Vec<f64>>,
    pub mbar: Option<f64>,
    pub z0: Option<f64>,
    pub fluid_horizon: Option<f64>,
    pub fluid_step: Option<f64>,
    pub seed: Option<u64>,
    pub replications: Option<u32>,
    pub sim_horizon: Option<f64>,
    pub checkpoint_times: Option<Vec<f64>>,
    pub initial_queue: Option<InitialQueue>,
    pub level: Option<f64>,
    pub resamples: Option<u32>,
    pub format: Option<String>,
    pub out: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
enum Origin {
    File { path: PathBuf, line: usize },
    Flag,
}

/// A merged configuration that remembers where each key was set, so that
/// validation errors can point at the offending line or flag.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ScenarioConfig,
    origins: BTreeMap<String, Origin>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn key_lines(text: &str) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if let Some((k, _)) = line.split_once('=') {
            let k = k.trim().trim_matches('"');
            if !k.is_empty() && !k.starts_with('#') {
                out.insert(k.to_string(), i + 1);
            }
        }
    }
    out
}

/// Parses a flag value as a TOML value; bare words become strings and
/// comma lists become arrays.
fn parse_flag_value(raw: &str) -> toml::Value {
    let attempt = |s: &str| {
        toml::from_str::<toml::Table>(&format!("v = {s}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
    };
    attempt(raw)
        .or_else(|| raw.contains(',').then(|| attempt(&format!("[{raw}]"))).flatten())
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> CliResult<Loaded> {
    let mut table = toml::Table::new();
    let mut origins = BTreeMap::new();

    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: cannot read config: {e}", path.display())))?;
        let located = |e: toml::de::Error| {
            let line = e.span().map_or(1, |s| line_of(&text, s.start));
            CliError::Config(format!("{}:{line}: {}", path.display(), e.message().trim()))
        };
        table = toml::from_str::<toml::Table>(&text).map_err(located)?;
        if let Some(k) = table.iter().find(|(_, v)| v.is_table()).map(|(k, _)| k) {
            let line = key_lines(&text).get(k.as_str()).copied().unwrap_or(1);
            return Err(CliError::Config(format!(
                "{}:{line}: sections are not supported; `{k}` must be a plain key",
                path.display()
            )));
        }
        toml::from_str::<ScenarioConfig>(&text).map_err(located)?;
        for (k, line) in key_lines(&text) {
            if table.contains_key(&k) {
                origins.insert(
                    k,
                    Origin::File {
                        path: path.to_path_buf(),
                        line,
                    },
                );
            }
        }
    }

    for (key, raw) in overrides {
        if !KEYS.iter().any(|(k, _)| k == key) {
            return Err(CliError::Config(format!("--{key}: unknown key")));
        }
        let value = parse_flag_value(raw);
        let mut single = toml::Table::new();
        single.insert(key.clone(), value.clone());
        toml::Value::Table(single)
            .try_into::<ScenarioConfig>()
            .map_err(|e| CliError::Config(format!("--{key} {raw}: {}", e.message().trim())))?;
        table.insert(key.clone(), value);
        origins.insert(key.clone(), Origin::Flag);
    }

    let config = toml::Value::Table(table)
        .try_into::<ScenarioConfig>()
        .map_err(|e| CliError::Config(e.message().trim().to_string()))?;
    Ok(Loaded { config, origins })
}

impl Loaded {
    /// A validation error located at the line or flag that set `key`.
    pub fn invalid(&self, key: &str, msg: impl std::fmt::Display) -> CliError {
        match self.origins.get(key) {
            Some(Origin::File { path, line }) => CliError::Config(format!("{}:{line}: {key}: {msg}", path.display())),
            Some(Origin::Flag) => CliError::Config(format!("--{key}: {msg}")),
            None => CliError::Config(format!("{key}: {msg}")),
        }
    }

    pub fn require<T: Clone>(&self, value: &Option<T>, key: &str) -> CliResult<T> {
        value
            .clone()
            .ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }

    pub fn params(&self) -> CliResult<ModelParams> {
        let c = &self.config;
        let lambda = self.require(&c.lambda, "lambda")?;
        let tau = self.require(&c.tau, "tau")?;
        let mu = self.require(&c.mu, "mu")?;
        let p = self.require(&c.p, "p")?;
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(self.invalid("lambda", "must be finite and > 0"));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(self.invalid("tau", "must be finite and >= 0"));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(self.invalid("mu", "must be finite and > 0"));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(self.invalid("p", "must lie in [0, 1]"));
        }
        ModelParams::new(lambda, tau, mu, p).map_err(|e| self.invalid("lambda", e))
    }

    pub fn alpha(&self) -> f64 {
        self.config.alpha.unwrap_or(0.05)
    }

    pub fn beta(&self) -> f64 {
        self.config.beta.unwrap_or(0.8)
    }

    pub fn horizon(&self) -> f64 {
        self.config.horizon.unwrap_or(10.0)
    }

    pub fn test_config(&self) -> CliResult<TestConfig> {
        let (alpha, beta, horizon) = (self.alpha(), self.beta(), self.horizon());
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(self.invalid("alpha", "must lie in (0, 1)"));
        }
        if !(beta > alpha && beta < 1.0) {
            return Err(self.invalid("beta", "must lie in (alpha, 1)"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(self.invalid("horizon", "must be > 0"));
        }
        TestConfig::new(alpha, beta, horizon).map_err(|e| self.invalid("alpha", e))
    }

    pub fn gamma(&self) -> CliResult<f64> {
        let g = self.config.gamma.unwrap_or(DEFAULT_GAMMA);
        if !(g.is_finite() && g >= 0.0) {
            return Err(self.invalid("gamma", "must be >= 0"));
        }
        Ok(g)
    }

    pub fn search_cap(&self) -> u32 {
        self.config.search_cap.unwrap_or(DEFAULT_SEARCH_CAP)
    }

    pub fn sqrt_step(&self) -> CliResult<u32> {
        let s = self.config.sqrt_step.unwrap_or(DEFAULT_SQRT_STEP);
        if s == 0 {
            return Err(self.invalid("sqrt_step", "must be >= 1"));
        }
        Ok(s)
    }

    pub fn initial_state(&self) -> CliResult<InitialState> {
        match &self.config.initial_queue {
            None => Ok(InitialState::Fixed(0)),
            Some(InitialQueue::Count(k)) => Ok(InitialState::Fixed(*k)),
            Some(InitialQueue::Named(s)) if s == "stationary" => Ok(InitialState::Stationary),
            Some(InitialQueue::Named(s)) => Err(self.invalid(
                "initial_queue",
                format!("expected a count or \"stationary\", got \"{s}\""),
            )),
        }
    }

    pub fn level(&self) -> CliResult<f64> {
        let l = self.config.level.unwrap_or(0.95);
        if !(l > 0.0 && l < 1.0) {
            return Err(self.invalid("level", "must lie in (0, 1)"));
        }
        Ok(l)
    }

    pub fn resamples(&self) -> CliResult<u32> {
        let r = self.config.resamples.unwrap_or(DEFAULT_RESAMPLES);
        if r == 0 {
            return Err(self.invalid("resamples", "must be >= 1"));
        }
        Ok(r)
    }

    pub fn format(&self) -> CliResult<OutputFormat> {
        match self.config.format.as_deref() {
            None | Some("csv") => Ok(OutputFormat::Csv),
            Some("json") => Ok(OutputFormat::Json),
            Some(other) => Err(self.invalid("format", format!("expected csv or json, got \"{other}\""))),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.config.out.clone().unwrap_or_else(|| ".".into()))
    }

    /// Canonical JSON of every key that was set, minus the output directory,
    /// which does not affect results.
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(&self.config).expect("config serializes");
        if let serde_json::Value::Object(map) = &mut value {
            map.retain(|k, v| !v.is_null() && k != "out");
        }
        value.to_string()
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}
