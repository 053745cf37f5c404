//! Sweep configuration files.

use std::path::{Path, PathBuf};

use rcd_core::calibration::{CalibrationMethod, CalibrationOptions};
use rcd_core::experiments::{resolve, ExperimentConfig, ResolvedExperiment, RuleConfig};
use rcd_core::{ChangeTime, Error, Result, RuleKind};
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "RCD_SEED";

/// Seed used when neither a flag nor a config file provides one.
pub fn env_seed() -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(0),
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub model: ModelSection,
    pub experiment: ExperimentSection,
    #[serde(rename = "rule", default)]
    pub rules: Vec<RuleSection>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Mean after the change; observations are N(0, 1) before it.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub theta_grid: Vec<Theta>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prior_gammas: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration_samples: Option<usize>,
}

/// A change point: a positive integer or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Theta {
    At(u64),
    Named(Never),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
pub enum Never {
    #[serde(rename = "inf")]
    Inf,
}

impl From<Theta> for ChangeTime {
    fn from(t: Theta) -> Self {
        match t {
            Theta::At(k) => ChangeTime::At(k),
            Theta::Named(Never::Inf) => ChangeTime::Never,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSection {
    pub kind: String,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<String>,
}

impl RuleSection {
    pub fn to_rule_config(&self) -> Result<RuleConfig> {
        let kind: RuleKind = self.kind.parse().map_err(config_error)?;
        let calibration = self
            .calibration
            .as_deref()
            .map(str::parse::<CalibrationMethod>)
            .transpose()
            .map_err(config_error)?;
        Ok(RuleConfig {
            label: self.label.clone(),
            kind,
            alpha: self.alpha,
            gamma: self.gamma,
            m: self.m,
            epsilon: self.epsilon,
            threshold: self.threshold,
            calibration,
        })
    }
}

fn config_error(e: Error) -> Error {
    match e {
        Error::Usage(msg) => Error::Config(msg),
        other => other,
    }
}

impl SweepFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies the seed precedence flag, file, environment.
    pub fn experiment_config(&self, seed_flag: Option<u64>) -> Result<ExperimentConfig> {
        let rules = self.rules.iter().map(RuleSection::to_rule_config).collect::<Result<Vec<_>>>()?;
        let grid = self.experiment.theta_grid.iter().map(|&t| t.into()).collect();
        let mut cfg = ExperimentConfig::new(self.model.delta, rules, grid);
        if let Some(t) = self.experiment.trials {
            cfg.trials = t;
        }
        cfg.horizon = self.experiment.horizon;
        cfg.master_seed = match seed_flag.or(self.experiment.seed) {
            Some(s) => s,
            None => env_seed()?,
        };
        let mut calibration = CalibrationOptions { seed: cfg.master_seed, ..Default::default() };
        if let Some(n) = self.experiment.calibration_samples {
            calibration.samples = n;
        }
        cfg.calibration = calibration;
        Ok(cfg)
    }

    /// The file as it will run: seed, trials and horizon filled in, every
    /// threshold fixed to its resolved value.
    pub fn resolved(&self, cfg: &ExperimentConfig, resolved: &ResolvedExperiment) -> SweepFile {
        let mut echo = self.clone();
        echo.experiment.seed = Some(cfg.master_seed);
        echo.experiment.trials = Some(cfg.trials);
        echo.experiment.horizon = Some(resolved.horizon);
        for (section, (label, rule)) in echo.rules.iter_mut().zip(&resolved.rules) {
            section.label = Some(label.clone());
            section.threshold = Some(rule.threshold().value());
        }
        echo
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Validates and resolves a sweep file.
pub fn prepare(file: &SweepFile, seed_flag: Option<u64>) -> Result<(ExperimentConfig, ResolvedExperiment, SweepFile)> {
    let cfg = file.experiment_config(seed_flag)?;
    let resolved = resolve(&cfg)?;
    let echo = file.resolved(&cfg, &resolved);
    Ok((cfg, resolved, echo))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[model]
delta = 1.0

[experiment]
theta_grid = [20, 50, "inf"]
trials = 100
seed = 3

[[rule]]
kind = "cusum"
alpha = 0.05

[[rule]]
kind = "bayes"
alpha = 0.05
gamma = 0.01
"#;

    #[test]
    fn parses_and_resolves() {
        let file = SweepFile::parse(SAMPLE).unwrap();
        assert_eq!(file.experiment.theta_grid[2], Theta::Named(Never::Inf));
        let (cfg, resolved, echo) = prepare(&file, None).unwrap();
        assert_eq!(cfg.master_seed, 3);
        assert_eq!(cfg.theta_grid[2], ChangeTime::Never);
        assert_eq!(echo.rules[0].label.as_deref(), Some("cusum_ml"));
        assert!((echo.rules[1].threshold.unwrap() - 19.0).abs() < 1e-12);
        assert_eq!(echo.experiment.horizon, Some(resolved.horizon));
        let round = SweepFile::parse(&echo.to_toml().unwrap()).unwrap();
        assert_eq!(round, echo);
    }

    #[test]
    fn flag_seed_wins() {
        let file = SweepFile::parse(SAMPLE).unwrap();
        assert_eq!(file.experiment_config(Some(9)).unwrap().master_seed, 9);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = SAMPLE.replace("trials = 100", "trials = 100\ntrails = 5");
        assert!(matches!(SweepFile::parse(&bad), Err(Error::Config(_))));
        let bad_rule = SAMPLE.replace("gamma = 0.01", "gamma = 0.01\nbeta = 2");
        assert!(SweepFile::parse(&bad_rule).is_err());
        let bad_theta = SAMPLE.replace("\"inf\"", "\"never\"");
        assert!(SweepFile::parse(&bad_theta).is_err());
    }

    #[test]
    fn unknown_rule_kind_is_config_error() {
        let bad = SAMPLE.replace("kind = \"cusum\"", "kind = \"glr\"");
        let file = SweepFile::parse(&bad).unwrap();
        assert!(matches!(file.experiment_config(None), Err(Error::Config(_))));
    }
}
