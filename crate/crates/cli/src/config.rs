//! JSON experiment configs.
//!
//! Every field is optional and falls back to the built-in experiment defaults. `params`
//! is merged field by field onto the default model parameters, so `{"params": {"beta1": 2}}`
//! is a complete config. Errors name the offending field.

use std::fmt;
use std::path::{Path, PathBuf};

use ridgeiv::estimators::PenaltyRate;
use ridgeiv::montecarlo::linspace;
use ridgeiv::{DgpParams, SweepConfig};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};

/// A problem with user-supplied configuration (exit code 2).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<ridgeiv::Error> for ConfigError {
    fn from(e: ridgeiv::Error) -> Self {
        ConfigError(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SweepPi,
    SweepBeta,
    VerifyAsymptotics,
    SingleRun,
}

/// Everything one CLI invocation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub sweep: Option<SweepConfig>,
    pub output_dir: PathBuf,
    pub emit_plots: bool,
    pub emit_raw: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Values(Vec<f64>),
    Range {
        start: f64,
        stop: f64,
        points: usize,
    },
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            GridSpec::Values(v) => v.clone(),
            GridSpec::Range {
                start,
                stop,
                points,
            } => linspace(*start, *stop, *points),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    #[serde(default)]
    pub params: Option<Map<String, Value>>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub lambda_values: Option<Vec<f64>>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub reps: Option<usize>,
    #[serde(default)]
    pub master_seed: Option<u64>,
    #[serde(default)]
    pub penalty_rate: Option<PenaltyRate>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleRunFile {
    #[serde(default)]
    pub params: Option<Map<String, Value>>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub lambda_values: Option<Vec<f64>>,
    #[serde(default)]
    pub penalty_rate: Option<PenaltyRate>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyFile {
    #[serde(default)]
    pub params: Option<Map<String, Value>>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub lambda0: Option<f64>,
    #[serde(default)]
    pub stock_c: Option<f64>,
}

/// Parses `text` into `T`, reporting the JSON path of the first bad field.
pub fn parse_json<T: DeserializeOwned>(text: &str, what: &str) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." || path.is_empty() {
            ConfigError(format!("{what}: {inner}"))
        } else {
            ConfigError(format!("{what}: field `{path}`: {inner}"))
        }
    })
}

pub fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, ConfigError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| ConfigError(format!("cannot read config {}: {e}", p.display())))?;
            parse_json(&text, &p.display().to_string())
        }
    }
}

/// Overlays `overrides` onto `base`.
pub fn merge_params(
    base: DgpParams,
    overrides: Option<&Map<String, Value>>,
) -> Result<DgpParams, ConfigError> {
    let Some(overrides) = overrides else {
        return Ok(base);
    };
    let mut value = serde_json::to_value(&base).map_err(|e| ConfigError(e.to_string()))?;
    let obj = value
        .as_object_mut()
        .expect("params serialize to an object");
    for (k, v) in overrides {
        obj.insert(k.clone(), v.clone());
    }
    let merged: DgpParams = parse_json(&value.to_string(), "params")?;
    merged
        .validate()
        .map_err(|e| ConfigError(format!("params: {e}")))?;
    Ok(merged)
}

impl SweepFile {
    /// Applies the file on top of `defaults`.
    pub fn into_sweep(self, defaults: SweepConfig) -> Result<SweepConfig, ConfigError> {
        let mut cfg = defaults;
        cfg.base_params = merge_params(cfg.base_params, self.params.as_ref())?;
        if let Some(grid) = self.grid {
            cfg.grid = grid.values();
        }
        if let Some(l) = self.lambda_values {
            cfg.lambda_values = l;
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(r) = self.reps {
            cfg.reps = r;
        }
        if let Some(s) = self.master_seed {
            cfg.master_seed = s;
        }
        if let Some(rate) = self.penalty_rate {
            cfg.penalty_rate = rate;
        }
        Ok(cfg)
    }
}

/// Field-level checks with messages that name the field.
pub fn validate_sweep(cfg: &SweepConfig) -> Result<(), ConfigError> {
    if cfg.grid.is_empty() {
        return Err(ConfigError("field `grid`: must not be empty".into()));
    }
    if cfg.grid.windows(2).any(|w| w[0] >= w[1]) || cfg.grid.iter().any(|g| !g.is_finite()) {
        return Err(ConfigError(
            "field `grid`: values must be finite and strictly increasing".into(),
        ));
    }
    if cfg.lambda_values.is_empty() {
        return Err(ConfigError(
            "field `lambda_values`: must not be empty".into(),
        ));
    }
    if let Some(bad) = cfg
        .lambda_values
        .iter()
        .find(|l| !(l.is_finite() && **l >= 0.0))
    {
        return Err(ConfigError(format!(
            "field `lambda_values`: {bad} is not a finite value >= 0"
        )));
    }
    if cfg.reps == 0 {
        return Err(ConfigError("field `reps`: must be >= 1".into()));
    }
    if cfg.n < 3 {
        return Err(ConfigError(format!(
            "field `n`: must be >= 3, got {}",
            cfg.n
        )));
    }
    cfg.validate().map_err(ConfigError::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_keeps_defaults() {
        let f: SweepFile = parse_json("{}", "cfg").unwrap();
        let cfg = f.into_sweep(SweepConfig::pi_sweep(100, 1)).unwrap();
        assert_eq!(cfg, SweepConfig::pi_sweep(100, 1));
    }

    #[test]
    fn partial_params_merge() {
        let f: SweepFile = parse_json(
            r#"{"params": {"beta1": 2.5}, "grid": {"start": 0, "stop": 1, "points": 3}, "reps": 7}"#,
            "cfg",
        )
        .unwrap();
        let cfg = f.into_sweep(SweepConfig::pi_sweep(100, 1)).unwrap();
        assert_eq!(cfg.base_params.beta1, 2.5);
        assert_eq!(cfg.base_params.pi0, -0.346);
        assert_eq!(cfg.grid, vec![0.0, 0.5, 1.0]);
        assert_eq!(cfg.reps, 7);
    }

    #[test]
    fn errors_name_the_field() {
        let e = parse_json::<SweepFile>(r#"{"reps": "many"}"#, "cfg").unwrap_err();
        assert!(e.0.contains("`reps`"), "{e}");
        let e = parse_json::<SweepFile>(r#"{"repz": 3}"#, "cfg").unwrap_err();
        assert!(e.0.contains("repz"), "{e}");

        let f: SweepFile = parse_json(r#"{"params": {"sigma_eps": -1}}"#, "cfg").unwrap();
        let e = f.into_sweep(SweepConfig::pi_sweep(1, 1)).unwrap_err();
        assert!(e.0.contains("sigma_eps"), "{e}");

        let f: SweepFile = parse_json(r#"{"params": {"beta_1": 1}}"#, "cfg").unwrap();
        let e = f.into_sweep(SweepConfig::pi_sweep(1, 1)).unwrap_err();
        assert!(e.0.contains("beta_1"), "{e}");

        let mut cfg = SweepConfig::pi_sweep(1, 1);
        cfg.grid = vec![1.0, 0.0];
        assert!(validate_sweep(&cfg).unwrap_err().0.contains("`grid`"));
        cfg = SweepConfig::pi_sweep(0, 1);
        assert!(validate_sweep(&cfg).unwrap_err().0.contains("`reps`"));
    }
}
