use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use medium_fusion::construction::{CacheMode, EndpointConfig};
use medium_fusion::harness::{SyntheticSpec, TrainConfig};
use serde::{Deserialize, Serialize};

/// Settings for the `construct` subcommand.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstructionSettings {
    /// Completion endpoint; without one, only cached responses are served.
    pub llm: Option<EndpointConfig>,
    /// Knowledge-graph endpoint; without one, only cached responses are served.
    pub kg: Option<EndpointConfig>,
    pub hop_limit: Option<u32>,
    pub cache_dir: Option<PathBuf>,
    pub cache_mode: Option<CacheMode>,
    pub template_dir: Option<PathBuf>,
}

/// Contents of a `--config` TOML file. Every section is optional; command
/// line flags override file values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub train: TrainConfig,
    pub synthetic: SyntheticSpec,
    pub construction: ConstructionSettings,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: FileConfig = toml::from_str("[train]\nlayers = 4\n").unwrap();
        assert_eq!(cfg.train.layers, 4);
        assert_eq!(cfg.train.lambda, 1e-3);
        assert_eq!(cfg.synthetic.n_instances, 200);
    }

    #[test]
    fn snapshot_round_trips() {
        let cfg = FileConfig::default();
        let back: FileConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
