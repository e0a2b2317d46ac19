//! Run configuration: a versioned JSON document, optionally overridden by flags.

use std::path::{Path, PathBuf};

use pdmp_core::catalog::{self, Numerics};
use pdmp_core::{ControlSet, ProblemSpec, RateBounds, RateMatrix, Rates, TauPolicy};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    /// A builtin name or a full problem definition.
    pub problem: Value,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    pub dx: Option<f64>,
    pub ds: Option<f64>,
    pub s_max: Option<f64>,
    pub tau_policy: Option<TauPolicy>,
    /// Value-iteration tolerance.
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    /// Number of steering directions for unit-circle control sets.
    pub directions: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub slices: Vec<String>,
    #[serde(default)]
    pub thresholds: Vec<f64>,
    /// Rate values whose pairs make up the fixed-rate sweep.
    #[serde(default)]
    pub sweep: Vec<f64>,
    /// `"l"` for uniform fixed rates, `"a:b"` for uniform interval rates.
    pub rates: Option<String>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub start: Option<Vec<f64>>,
    pub mode: Option<usize>,
    pub restrict: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
}

/// Everything a subcommand needs, with defaults filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: Config,
    pub spec: ProblemSpec,
    pub numerics: Numerics,
    pub tol: f64,
    pub max_iter: usize,
}

impl Config {
    pub fn builtin(name: &str) -> Self {
        Config {
            schema_version: SCHEMA_VERSION,
            problem: Value::String(name.to_string()),
            numerics: NumericsConfig::default(),
            run: RunConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Config = serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Config(format!("at `{}`: {}", e.path(), e.inner())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Builtin name or path to a config file.
    pub fn load(problem: &str) -> Result<Self, CliError> {
        if catalog::builtin(problem).is_some() {
            return Ok(Config::builtin(problem));
        }
        let path = Path::new(problem);
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read `{}`: {e}", path.display())))?;
        Config::from_json(&text)
    }

    pub fn resolve(self) -> Result<Resolved, CliError> {
        let (mut spec, base) = match &self.problem {
            Value::String(name) => catalog::builtin(name)
                .ok_or_else(|| CliError::Config(format!("unknown builtin problem `{name}`")))?,
            other => {
                let spec: ProblemSpec = serde_path_to_error::deserialize(other.clone())
                    .map_err(|e| CliError::Config(format!("at `problem.{}`: {}", e.path(), e.inner())))?;
                (spec, Numerics { dx: 1e-2, ds: 1e-2, s_max: 1.0, tau_policy: TauPolicy::Uniform })
            }
        };
        if let Some(r) = &self.run.rates {
            spec.rates = parse_rates(r, spec.mode_count())?;
        }
        if let Some(d) = self.numerics.directions {
            match spec.controls {
                ControlSet::UnitCircle { .. } => spec.controls = ControlSet::UnitCircle { directions: d },
                _ => return Err(CliError::Config("`directions` only applies to unit-circle controls".into())),
            }
        }
        spec.validate()?;
        let n = &self.numerics;
        let numerics = Numerics {
            dx: n.dx.unwrap_or(base.dx),
            ds: n.ds.unwrap_or(base.ds),
            s_max: n.s_max.unwrap_or(base.s_max),
            tau_policy: n.tau_policy.unwrap_or(base.tau_policy),
        };
        // Reject CFL violations before any solve starts.
        if numerics.tau_policy == TauPolicy::Uniform {
            let ds_max = spec.cfl_max_ds(numerics.dx)?;
            if numerics.ds > ds_max * (1.0 + 1e-12) {
                return Err(pdmp_core::Error::Cfl { ds: numerics.ds, ds_max, dx: numerics.dx }.into());
            }
        }
        let (tol, max_iter) = (n.tol.unwrap_or(1e-10), n.max_iter.unwrap_or(200_000));
        // Record the values actually used so the stored config reproduces the run.
        let mut config = self;
        config.numerics = NumericsConfig {
            dx: Some(numerics.dx),
            ds: Some(numerics.ds),
            s_max: Some(numerics.s_max),
            tau_policy: Some(numerics.tau_policy),
            tol: Some(tol),
            max_iter: Some(max_iter),
            directions: config.numerics.directions,
        };
        Ok(Resolved { tol, max_iter, config, spec, numerics })
    }
}

pub fn parse_rates(text: &str, modes: usize) -> Result<Rates, CliError> {
    let num = |s: &str| {
        s.trim().parse::<f64>().map_err(|_| CliError::Config(format!("rate `{s}` is not a number")))
    };
    Ok(match text.split_once(':') {
        Some((a, b)) => Rates::Bounded(RateBounds::uniform(modes, num(a)?, num(b)?)?),
        None => Rates::Fixed(RateMatrix::uniform(modes, num(text)?)?),
    })
}

pub fn parse_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|_| CliError::Config(format!("`{s}` is not a number"))))
        .collect()
}

/// A requested export: a fixed-cost snapshot or a fixed-point CDF curve.
#[derive(Debug, Clone, PartialEq)]
pub enum Slice {
    Cost(f64),
    Point(Vec<f64>),
}

/// Parses `s=0.25,0.5` or `x=0.3` / `x=0.4:0.3` (coordinates joined by `:`).
pub fn parse_slices(text: &str, dim: usize) -> Result<Vec<Slice>, CliError> {
    let (key, vals) = text
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("slice `{text}` must look like s=... or x=...")))?;
    match key.trim() {
        "s" => Ok(parse_list(vals)?.into_iter().map(Slice::Cost).collect()),
        "x" => vals
            .split(',')
            .map(|p| {
                let c = p.split(':').map(|v| v.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>();
                match c {
                    Ok(c) if c.len() == dim => Ok(Slice::Point(c)),
                    _ => Err(CliError::Config(format!("point `{p}` needs {dim} coordinate(s)"))),
                }
            })
            .collect(),
        k => Err(CliError::Config(format!("unknown slice key `{k}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_errors() {
        let e = Config::from_json(r#"{"schema_version": 1, "problem": "example1", "numerics": {"dz": 1}}"#).unwrap_err();
        assert!(e.to_string().contains("numerics"), "{e}");
        assert!(Config::from_json(r#"{"schema_version": 2, "problem": "example1"}"#).is_err());
    }

    #[test]
    fn field_path_is_reported() {
        let mut v = serde_json::to_value(Config::builtin("example1")).unwrap();
        let mut spec = serde_json::to_value(catalog::example1()).unwrap();
        spec["modes"][1]["dynamics"] = serde_json::json!({"bogus": 1});
        v["problem"] = spec;
        let e = Config::from_json(&v.to_string()).unwrap().resolve().unwrap_err();
        assert!(e.to_string().contains("problem.modes[1]"), "{e}");
    }

    #[test]
    fn cfl_is_checked_on_load() {
        let mut c = Config::builtin("example2");
        c.numerics.ds = Some(0.01);
        c.numerics.dx = Some(0.001);
        let e = c.resolve().unwrap_err();
        assert_eq!(e.exit_code(), 3);
        assert!(e.to_string().contains("0.01") && e.to_string().contains("0.001"), "{e}");
    }

    #[test]
    fn rate_overrides() {
        assert!(matches!(parse_rates("1:4", 2).unwrap(), Rates::Bounded(_)));
        assert!(matches!(parse_rates("3", 2).unwrap(), Rates::Fixed(_)));
        assert!(parse_rates("4:1", 2).is_err());
    }

    #[test]
    fn slices() {
        assert_eq!(parse_slices("s=0.25,0.5", 1).unwrap(), vec![Slice::Cost(0.25), Slice::Cost(0.5)]);
        assert_eq!(parse_slices("x=0.4:0.3", 2).unwrap(), vec![Slice::Point(vec![0.4, 0.3])]);
        assert!(parse_slices("x=0.4", 2).is_err());
        assert!(parse_slices("t=1", 1).is_err());
    }
}
