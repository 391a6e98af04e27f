//! Flat key-value run configuration.
//!
//! The same keys are accepted in a TOML file and as `key=value` overrides on
//! the command line. Keys of the form `threshold_<name>` override the
//! acceptance thresholds of the selected experiment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Result, RunError};

pub const THRESHOLD_PREFIX: &str = "threshold_";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    /// Problem name or file for `solve`.
    pub problem: Option<String>,
    /// Family name or file for `diagnose`.
    pub family: Option<String>,
    pub eps0: f64,
    pub steps: usize,
    pub seed: u64,
    /// Dimension of the sequence-space example.
    pub dim: usize,
    pub depth: Option<usize>,
    pub mesh: Option<usize>,
    pub modes: Option<usize>,
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub levels: Option<Vec<usize>>,
    pub parallel: bool,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub thresholds: BTreeMap<String, f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: String::new(),
            problem: None,
            family: None,
            eps0: 0.1,
            steps: 14,
            seed: 7,
            dim: 6,
            depth: None,
            mesh: None,
            modes: None,
            horizon: None,
            levels: None,
            parallel: false,
            threads: None,
            out: None,
            thresholds: BTreeMap::new(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| RunError::config(format!("cannot parse {key} = {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn toml_to_text(key: &str, v: &toml::Value) -> Result<String> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::Array(items) => items
            .iter()
            .map(|i| toml_to_text(key, i))
            .collect::<Result<Vec<_>>>()?
            .join(","),
        _ => return Err(RunError::config(format!("{key} must be a plain value, not a table"))),
    })
}

impl ExperimentConfig {
    pub fn new(experiment: impl Into<String>) -> Self {
        Self {
            experiment: experiment.into(),
            ..Self::default()
        }
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        match key {
            "experiment" => self.experiment = value.trim().to_string(),
            "problem" => self.problem = Some(value.trim().to_string()),
            "family" => self.family = Some(value.trim().to_string()),
            "eps0" => self.eps0 = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "dim" => self.dim = parse(key, value)?,
            "depth" => self.depth = Some(parse(key, value)?),
            "mesh" => self.mesh = Some(parse(key, value)?),
            "modes" => self.modes = Some(parse(key, value)?),
            "T" | "horizon" => self.horizon = Some(parse(key, value)?),
            "levels" => self.levels = Some(parse_list(key, value)?),
            "parallel" => self.parallel = parse(key, value)?,
            "threads" => self.threads = Some(parse(key, value)?),
            "out" => self.out = Some(PathBuf::from(value.trim())),
            other => match other.strip_prefix(THRESHOLD_PREFIX) {
                Some(name) if !name.is_empty() => {
                    self.thresholds.insert(name.to_string(), parse(key, value)?);
                }
                _ => return Err(RunError::config(format!("unknown key '{other}'"))),
            },
        }
        Ok(())
    }

    /// Apply a `key=value` override as given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| RunError::config(format!("override '{pair}' is not of the form key=value")))?;
        self.set(k, v)
    }

    /// Apply every key of a flat TOML document.
    pub fn merge_toml(&mut self, text: &str) -> Result<()> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| RunError::config(e.message().to_string()))?;
        for (k, v) in &table {
            self.set(k, &toml_to_text(k, v)?)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| RunError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::default();
        cfg.merge_toml(&text).map_err(|e| RunError::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok(cfg)
    }

    /// Range checks shared by all experiments.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(RunError::config(msg));
        if self.experiment.is_empty() {
            return bad("no experiment selected".into());
        }
        if !(self.eps0 > 0.0 && self.eps0 < 1.0) {
            return bad(format!("eps0 must lie in (0, 1), got {}", self.eps0));
        }
        if !(1..=60).contains(&self.steps) {
            return bad(format!("steps must lie in 1..=60, got {}", self.steps));
        }
        if !(3..=400).contains(&self.dim) {
            return bad(format!("dim must lie in 3..=400, got {}", self.dim));
        }
        if let Some(d) = self.depth {
            if !(1..=20).contains(&d) {
                return bad(format!("depth must lie in 1..=20, got {d}"));
            }
        }
        if let Some(n) = self.mesh {
            if !(1..=4095).contains(&n) {
                return bad(format!("mesh must lie in 1..=4095, got {n}"));
            }
        }
        if let Some(m) = self.modes {
            if !(1..=512).contains(&m) {
                return bad(format!("modes must lie in 1..=512, got {m}"));
            }
        }
        if let Some(t) = self.horizon {
            if !(t > 0.0 && t <= 100.0) {
                return bad(format!("T must lie in (0, 100], got {t}"));
            }
        }
        if let Some(levels) = &self.levels {
            if levels.is_empty() || levels[0] == 0 || levels.windows(2).any(|w| w[1] <= w[0]) {
                return bad(format!("levels must be positive and strictly increasing, got {levels:?}"));
            }
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }
}
