//! Config files, precedence rules and the resolved-run record.
//!
//! Every setting resolves as: command-line flag, else config-file value,
//! else the library default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use micclust_core::baselines::DpConfig;
use micclust_core::gwas::GwasConfig;
use micclust_core::{FitConfig, PriorConfig};
use serde::{Deserialize, Serialize};

use crate::commands::simulate::SimulateConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub prior: Option<PriorConfig>,
    pub fit: Option<FitConfig>,
    /// Only the DP-specific keys are used; chain lengths come from `[fit]`.
    pub dp: Option<DpConfig>,
    pub gwas: Option<GwasConfig>,
    pub simulate: Option<SimulateConfig>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

/// Picks the flag, then the file value, then the default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Fully resolved settings of one invocation, written as `run_config.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub version: &'static str,
    pub command: String,
    pub inputs: BTreeMap<String, PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drug: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dp: Option<DpConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gwas: Option<GwasConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub options: BTreeMap<String, serde_json::Value>,
}

impl RunConfig {
    pub fn new(command: &str, out: &Path, seed: u64) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            inputs: BTreeMap::new(),
            out: out.to_path_buf(),
            seed,
            method: None,
            drug: None,
            prior: None,
            fit: None,
            dp: None,
            gwas: None,
            simulate: None,
            options: BTreeMap::new(),
        }
    }

    /// Records an input path after checking that it exists.
    pub fn input(mut self, name: &str, path: &Path) -> CliResult<Self> {
        require_file(path)?;
        self.inputs.insert(name.to_string(), path.to_path_buf());
        Ok(self)
    }

    pub fn option(mut self, name: &str, value: impl Serialize) -> Self {
        self.options.insert(name.to_string(), serde_json::to_value(value).expect("serializable option"));
        self
    }
}

pub fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("input file not found: {}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        assert_eq!(pick(Some(1), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick(None, None, 3), 3);
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let cfg = ConfigFile::parse("seed = 4\n[fit]\nthin = 3\n[prior]\nk_max = 12\n").unwrap();
        assert_eq!(cfg.seed, Some(4));
        let fit = cfg.fit.unwrap();
        assert_eq!(fit.thin, 3);
        assert_eq!(fit.iterations, FitConfig::default().iterations);
        assert_eq!(cfg.prior.unwrap().k_max, 12);
        assert!(ConfigFile::parse("bogus = 1\n").is_err());
    }

    #[test]
    fn missing_inputs_name_the_path() {
        let err = RunConfig::new("fit", Path::new("out"), 0).input("data", Path::new("/no/such/mic.csv")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/no/such/mic.csv"));
        let err = ConfigFile::load(Some(Path::new("/no/such/cfg.toml"))).unwrap_err();
        assert!(err.to_string().contains("/no/such/cfg.toml"));
    }
}
