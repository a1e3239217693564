//! Experiment configuration, read from TOML.
//!
//! ```toml
//! problem = "curve"
//! generator = "rose"
//! m = 1000
//! n1 = 100
//! noise_amplitude = 10.0
//! seeds = [0, 1, 2]
//!
//! [lambda]
//! mode = "fixed"
//! value = 1.646e-6
//! ```
//!
//! Fields left out get problem-dependent defaults; [`ExperimentConfig::resolved`]
//! fills them in and validates the result.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curve::DEFAULT_TRAJECTORY_STRIDE;
use crate::error::{FitError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Curve,
    Surface,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    Rose,
    Blob,
    Boy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    #[default]
    Rpia,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", deny_unknown_fields)]
pub enum LambdaMode {
    Fixed { value: f64 },
    /// Spectral-decay rule.
    Estimate,
    SelfConsistent,
    /// `points` log-spaced values from `min` to `max`.
    Sweep { min: f64, max: f64, points: usize },
}

impl LambdaMode {
    /// Grid values of a sweep; `None` for the other modes.
    pub fn grid(&self) -> Option<Vec<f64>> {
        match *self {
            LambdaMode::Sweep { min, max, points } => Some(log_grid(min, max, points)),
            _ => None,
        }
    }
}

/// `points` values spaced evenly in `log10` from `min` to `max`, endpoints exact.
pub fn log_grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![min];
    }
    let (lo, hi) = (min.log10(), max.log10());
    (0..points)
        .map(|i| match i {
            0 => min,
            i if i == points - 1 => max,
            i => 10f64.powf(lo + (hi - lo) * i as f64 / (points - 1) as f64),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
    /// CSV file with the base data (instead of a generator).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Data points are `m + 1` (by `p + 1` for surfaces). Inferred from `input`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    pub n1: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n2: Option<usize>,
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_size_v: Option<usize>,
    pub lambda: LambdaMode,
    #[serde(default)]
    pub noise_amplitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_scale: Option<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_count: Option<usize>,
    #[serde(default = "default_eps_lambda")]
    pub eps_lambda: f64,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_stride")]
    pub trajectory_stride: usize,
    #[serde(default)]
    pub solver: Solver,
    /// Solver inside the self-consistent loop.
    #[serde(default = "default_inner_solver")]
    pub inner_solver: Solver,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn default_block_size() -> usize {
    5
}
fn default_tolerance() -> f64 {
    1e-8
}
fn default_eps_lambda() -> f64 {
    0.01
}
fn default_max_outer() -> usize {
    50
}
fn default_stride() -> usize {
    DEFAULT_TRAJECTORY_STRIDE
}
fn default_inner_solver() -> Solver {
    Solver::Direct
}

fn invalid(msg: impl Into<String>) -> FitError {
    FitError::InvalidConfig(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    pub fn from_toml_table(table: toml::Table) -> Result<Self> {
        table.try_into().map_err(|e: toml::de::Error| invalid(e.to_string()))
    }

    /// Reads a config file. Relative `input` paths resolve against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_table(Self::load_table(path)?)
    }

    /// Raw table of a config file, for layering overrides before parsing.
    pub fn load_table(path: &Path) -> Result<toml::Table> {
        let mut table: toml::Table =
            toml::from_str(&std::fs::read_to_string(path)?).map_err(|e| invalid(e.to_string()))?;
        if let (Some(toml::Value::String(input)), Some(dir)) = (table.get("input"), path.parent()) {
            let input = PathBuf::from(input);
            if input.is_relative() {
                let joined = dir.join(input).to_string_lossy().into_owned();
                table.insert("input".into(), toml::Value::String(joined));
            }
        }
        Ok(table)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn is_curve(&self) -> bool {
        self.problem == ProblemKind::Curve
    }

    /// Copy with every defaulted field filled in, after validation.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        let curve = c.is_curve();
        match (c.generator, &c.input) {
            (Some(_), Some(_)) => return Err(invalid("give either generator or input, not both")),
            (None, None) => return Err(invalid("one of generator or input is required")),
            (Some(Generator::Boy), None) if curve => return Err(invalid("generator boy is a surface")),
            (Some(Generator::Rose | Generator::Blob), None) if !curve => {
                return Err(invalid("generators rose and blob are curves"))
            }
            (Some(_), None) => {
                if c.m.is_none() {
                    return Err(invalid("m is required with a generator"));
                }
                if !curve && c.p.is_none() {
                    c.p = c.m;
                }
            }
            (None, Some(_)) => {}
        }
        if curve {
            if c.n2.is_some() || c.p.is_some() || c.block_size_v.is_some() {
                return Err(invalid("p, n2 and block_size_v only apply to surfaces"));
            }
        } else {
            c.n2.get_or_insert(c.n1);
            c.block_size_v.get_or_insert(c.block_size);
        }
        c.penalty_scale.get_or_insert(if curve { 1600.0 } else { 91.0 });
        c.max_iterations.get_or_insert(if curve { 8000 } else { 10_000 });
        c.head_count.get_or_insert(if curve { 50 } else { 100 });
        c.seeds.get_or_insert_with(|| (0..if curve { 10 } else { 3 }).collect());
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.m),
            ("p", self.p),
            ("n1", Some(self.n1)),
            ("n2", self.n2),
            ("block_size", Some(self.block_size)),
            ("block_size_v", self.block_size_v),
            ("trajectory_stride", Some(self.trajectory_stride)),
            ("max_outer", Some(self.max_outer)),
            ("workers", self.workers),
        ];
        for (name, v) in positive {
            if v == Some(0) {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if !(self.noise_amplitude >= 0.0) || !self.noise_amplitude.is_finite() {
            return Err(invalid(format!("noise_amplitude must be >= 0, got {}", self.noise_amplitude)));
        }
        let scale = self.penalty_scale.unwrap_or(1.0);
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(invalid(format!("penalty_scale must be positive, got {scale}")));
        }
        if !(self.tolerance >= 0.0) || !self.tolerance.is_finite() {
            return Err(invalid(format!("tolerance must be >= 0, got {}", self.tolerance)));
        }
        if !(self.eps_lambda > 0.0) {
            return Err(invalid(format!("eps_lambda must be positive, got {}", self.eps_lambda)));
        }
        if self.head_count.is_some_and(|h| h < 3) {
            return Err(invalid("head_count must be at least 3"));
        }
        if let Some(seeds) = &self.seeds {
            if seeds.is_empty() {
                return Err(invalid("seeds must not be empty"));
            }
            if seeds.iter().collect::<BTreeSet<_>>().len() != seeds.len() {
                return Err(invalid("seeds must be distinct"));
            }
        }
        match self.lambda {
            LambdaMode::Fixed { value } if !(value >= 0.0) || !value.is_finite() => {
                Err(invalid(format!("lambda must be finite and >= 0, got {value}")))
            }
            LambdaMode::Sweep { min, max, points } => {
                if !(min > 0.0 && max >= min && max.is_finite()) {
                    Err(invalid(format!("sweep needs 0 < min <= max, got [{min}, {max}]")))
                } else if points == 0 || (points == 1 && min != max) || (points > 1 && min == max) {
                    Err(invalid(format!("sweep of {points} points over [{min}, {max}]")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    // Accessors for resolved configs.

    pub fn seed_list(&self) -> &[u64] {
        self.seeds.as_deref().unwrap_or(&[])
    }

    pub fn penalty(&self) -> f64 {
        self.penalty_scale.expect("resolved config")
    }

    pub fn iteration_cap(&self) -> usize {
        self.max_iterations.expect("resolved config")
    }

    pub fn spectral_head(&self) -> usize {
        self.head_count.expect("resolved config")
    }
}
