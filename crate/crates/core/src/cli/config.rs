use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::harness::plan::{EstimatorChoice, DesignPoint};
use crate::harness::suites::Suite;
use crate::model::ProcessSpec;
use crate::smoother::{Boundary, KernelSpec, DEFAULT_GRID};

/// `fixed:<h>` or `corollary1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BandwidthArg {
    Fixed(f64),
    CorollaryOne,
}

impl FromStr for BandwidthArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "corollary1" {
            return Ok(Self::CorollaryOne);
        }
        let Some(v) = s.strip_prefix("fixed:") else {
            return Err(format!("expected `fixed:<h>` or `corollary1`, got `{s}`"));
        };
        let h: f64 = v.parse().map_err(|e| format!("bad bandwidth `{v}`: {e}"))?;
        if !(h > 0.0 && h < 0.5) {
            return Err(format!("bandwidth {h} outside (0, 0.5)"));
        }
        Ok(Self::Fixed(h))
    }
}

impl TryFrom<String> for BandwidthArg {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<BandwidthArg> for String {
    fn from(b: BandwidthArg) -> String {
        b.to_string()
    }
}

impl fmt::Display for BandwidthArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(h) => write!(f, "fixed:{h}"),
            Self::CorollaryOne => f.write_str("corollary1"),
        }
    }
}

/// Output artifacts written by `verify`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Json, OutputFormat::Csv]
}
fn default_grid() -> usize {
    DEFAULT_GRID
}
fn default_design() -> DesignPoint {
    DesignPoint { n: 100, n_obs: 10 }
}
fn default_datasets() -> usize {
    1
}
fn default_bandwidth() -> BandwidthArg {
    BandwidthArg::Fixed(0.1)
}
fn default_eigen_count() -> usize {
    10
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Declarative run configuration shared by all subcommands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub spec: ProcessSpec,
    #[serde(default = "default_design")]
    pub design: DesignPoint,
    /// Number of datasets written by `simulate`.
    #[serde(default = "default_datasets")]
    pub datasets: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: BandwidthArg,
    /// Index used by the `corollary1` bandwidth.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    #[serde(default)]
    pub estimator: EstimatorChoice,
    /// Eigenpairs written by `estimate`.
    #[serde(default = "default_eigen_count")]
    pub eigen_count: usize,
    #[serde(default)]
    pub suites: Vec<Suite>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
    #[serde(default)]
    pub parallel: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

/// Configuration error with a file position when one is known.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl RunConfig {
    pub fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_string(),
            line: e.line(),
            column: e.column(),
            message: strip_position(&e.to_string()),
        })?;
        cfg.validate().map_err(|message| ConfigError::Invalid {
            path: path.to_string(),
            message,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: shown.clone(),
            source,
        })?;
        Self::parse(&text, &shown)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.spec.validate().map_err(|e| e.to_string())?;
        if self.grid_size < 2 {
            return Err("grid_size must be at least 2".into());
        }
        if self.datasets == 0 {
            return Err("datasets must be positive".into());
        }
        if self.eigen_count == 0 {
            return Err("eigen_count must be positive".into());
        }
        if self.bandwidth == BandwidthArg::CorollaryOne && self.m == Some(0) {
            return Err("m must be positive".into());
        }
        Ok(())
    }
}

// serde_json appends " at line L column C"; the position is reported separately.
fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandwidth_arguments() {
        assert_eq!("fixed:0.1".parse::<BandwidthArg>().unwrap(), BandwidthArg::Fixed(0.1));
        assert_eq!("corollary1".parse::<BandwidthArg>().unwrap(), BandwidthArg::CorollaryOne);
        assert!("fixed:0.7".parse::<BandwidthArg>().is_err());
        assert!("silverman".parse::<BandwidthArg>().is_err());
    }

    #[test]
    fn unknown_keys_are_line_anchored() {
        let text = "{\n  \"seed\": 3,\n  \"sede\": 4\n}";
        match RunConfig::parse(text, "c.json") {
            Err(ConfigError::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("sede"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn defaults_and_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.grid_size, DEFAULT_GRID);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::parse(&text, "x").unwrap(), cfg);
    }
}
