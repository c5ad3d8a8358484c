//! Sweep configuration: a `key = value` file with command-line overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::environments::{PrototypeMode, Sharing};
use crate::learning::{AnchorRule, Algorithm, ExperimentConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },

    #[error("line {line}: duplicate key `{key}` (first set on line {first})")]
    Duplicate { key: String, line: usize, first: usize },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },

    #[error("missing required key `{0}`")]
    Missing(&'static str),

    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

/// Every recognized key, in echo order.
pub const KEYS: [&str; 14] = [
    "algorithms",
    "episodes",
    "sims",
    "seed",
    "delta",
    "prototypes",
    "mode",
    "gap",
    "sharing",
    "early_stop",
    "ucbvi_bonus_scale",
    "anchor",
    "epsilon",
    "out",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub algorithms: Vec<Algorithm>,
    pub episodes: usize,
    pub sims: usize,
    pub seed: u64,
    pub delta: f64,
    pub prototypes: usize,
    pub mode: PrototypeMode,
    pub gap: f64,
    pub sharing: Sharing,
    pub early_stop: bool,
    pub ucbvi_bonus_scale: f64,
    pub anchor: AnchorRule,
    /// Accuracy target of the finite-sample threshold.
    pub epsilon: f64,
    pub out: PathBuf,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            algorithms: vec![Algorithm::RpoAas],
            episodes: 3000,
            sims: 100,
            seed: 0,
            delta: 0.05,
            prototypes: 4,
            mode: PrototypeMode::FixedGap,
            gap: 0.2,
            sharing: Sharing::Shared,
            early_stop: false,
            ucbvi_bonus_scale: 1.0,
            anchor: AnchorRule::Informative,
            epsilon: 1.0,
            out: PathBuf::from("out"),
        }
    }
}

impl SweepConfig {
    /// Learner settings for simulation seed `seed`.
    pub fn experiment(&self, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            episodes: self.episodes,
            delta: self.delta,
            seed,
            early_stop: self.early_stop,
            ucbvi_bonus_scale: self.ucbvi_bonus_scale,
            anchor: self.anchor,
        }
    }

    /// Resolved configuration in the file syntax.
    pub fn echo(&self) -> String {
        let algos: Vec<&str> = self.algorithms.iter().map(|a| a.as_str()).collect();
        let mut out = String::new();
        let _ = writeln!(out, "algorithms = {}", algos.join(","));
        let _ = writeln!(out, "episodes = {}", self.episodes);
        let _ = writeln!(out, "sims = {}", self.sims);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "delta = {}", self.delta);
        let _ = writeln!(out, "prototypes = {}", self.prototypes);
        let _ = writeln!(out, "mode = {}", self.mode.as_str());
        let _ = writeln!(out, "gap = {}", self.gap);
        let _ = writeln!(out, "sharing = {}", self.sharing.as_str());
        let _ = writeln!(out, "early_stop = {}", self.early_stop);
        let _ = writeln!(out, "ucbvi_bonus_scale = {}", self.ucbvi_bonus_scale);
        let _ = writeln!(out, "anchor = {}", self.anchor.as_str());
        let _ = writeln!(out, "epsilon = {}", self.epsilon);
        let _ = writeln!(out, "out = {}", self.out.display());
        let _ = writeln!(out, "# pairing: one prototype family per simulation, shared by all algorithms");
        out
    }
}

/// Values given on the command line; each replaces the file's value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub values: Vec<(&'static str, String)>,
}

impl Overrides {
    pub fn set(&mut self, key: &'static str, value: impl Into<String>) {
        self.values.push((key, value.into()));
    }
}

fn parse_value<T: std::str::FromStr>(key: &'static str, raw: &str, what: &str) -> Result<T, ConfigError> {
    raw.parse().map_err(|_| ConfigError::Invalid {
        key,
        reason: format!("`{raw}` is not {what}"),
    })
}

fn parse_bool(key: &'static str, raw: &str) -> Result<bool, ConfigError> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::Invalid {
            key,
            reason: format!("`{raw}` is not true or false"),
        }),
    }
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

/// Parses `text` and applies `overrides`. `algorithms` and `out` must be set
/// by one of the two; everything else has a default.
pub fn parse_config(text: &str, overrides: &Overrides) -> Result<SweepConfig, ConfigError> {
    let mut raw: BTreeMap<&'static str, (String, usize)> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = line.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: line_no,
                reason: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = key.trim();
        let Some(&known) = KEYS.iter().find(|&&k| k == key) else {
            return Err(ConfigError::UnknownKey {
                key: key.to_string(),
                line: line_no,
            });
        };
        if let Some((_, first)) = raw.get(known) {
            return Err(ConfigError::Duplicate {
                key: key.to_string(),
                line: line_no,
                first: *first,
            });
        }
        raw.insert(known, (value.trim().to_string(), line_no));
    }
    for (key, value) in &overrides.values {
        raw.insert(key, (value.clone(), 0));
    }
    let get = |key: &str| raw.get(key).map(|(v, _)| v.as_str());

    let mut config = SweepConfig::default();
    let algos = get("algorithms").ok_or(ConfigError::Missing("algorithms"))?;
    config.algorithms = Vec::new();
    for tag in algos.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let alg: Algorithm = tag.parse().map_err(|e| invalid("algorithms", e))?;
        if !config.algorithms.contains(&alg) {
            config.algorithms.push(alg);
        }
    }
    if config.algorithms.is_empty() {
        return Err(invalid("algorithms", "no algorithm listed"));
    }
    config.out = PathBuf::from(get("out").ok_or(ConfigError::Missing("out"))?);

    if let Some(v) = get("episodes") {
        config.episodes = parse_value("episodes", v, "a positive integer")?;
        if config.episodes == 0 {
            return Err(invalid("episodes", "must be at least 1"));
        }
    }
    if let Some(v) = get("sims") {
        config.sims = parse_value("sims", v, "a positive integer")?;
        if config.sims == 0 {
            return Err(invalid("sims", "must be at least 1"));
        }
    }
    if let Some(v) = get("seed") {
        config.seed = parse_value("seed", v, "a nonnegative integer")?;
    }
    if let Some(v) = get("delta") {
        config.delta = parse_value("delta", v, "a number")?;
        if !(config.delta > 0.0 && config.delta < 1.0) {
            return Err(invalid("delta", format!("{v} is outside the open interval (0, 1)")));
        }
    }
    if let Some(v) = get("prototypes") {
        config.prototypes = parse_value("prototypes", v, "a positive integer")?;
        if config.prototypes == 0 {
            return Err(invalid("prototypes", "must be at least 1"));
        }
    }
    if let Some(v) = get("mode") {
        config.mode = v.parse().map_err(|e| invalid("mode", e))?;
    }
    if let Some(v) = get("gap") {
        config.gap = parse_value("gap", v, "a number")?;
        if !(config.gap >= 0.0) {
            return Err(invalid("gap", format!("{v} is negative")));
        }
    }
    if config.mode == PrototypeMode::FixedGap && (config.prototypes - 1) as f64 * config.gap > 1.0 {
        return Err(invalid(
            "gap",
            format!("{} prototypes with gap {} do not fit in [0, 1]", config.prototypes, config.gap),
        ));
    }
    if let Some(v) = get("sharing") {
        config.sharing = v.parse().map_err(|e| invalid("sharing", e))?;
    }
    if let Some(v) = get("early_stop") {
        config.early_stop = parse_bool("early_stop", v)?;
    }
    if let Some(v) = get("ucbvi_bonus_scale") {
        config.ucbvi_bonus_scale = parse_value("ucbvi_bonus_scale", v, "a number")?;
        if !(config.ucbvi_bonus_scale > 0.0 && config.ucbvi_bonus_scale.is_finite()) {
            return Err(invalid("ucbvi_bonus_scale", format!("{v} is not positive")));
        }
    }
    if let Some(v) = get("anchor") {
        config.anchor = v.parse().map_err(|e| invalid("anchor", e))?;
    }
    if let Some(v) = get("epsilon") {
        config.epsilon = parse_value("epsilon", v, "a number")?;
        if !(config.epsilon > 0.0) {
            return Err(invalid("epsilon", format!("{v} is not positive")));
        }
    }
    Ok(config)
}
