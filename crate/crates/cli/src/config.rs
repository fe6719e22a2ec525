//! Run settings: built-in defaults, then the `[run]` table of a config file,
//! then command-line flags.

use std::path::{Path, PathBuf};

use ioi_engine::scenarios::ScenarioConfig;
use ioi_engine::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub transitions: u64,
    pub burn_in: u64,
    pub scan: String,
    pub thin: usize,
    pub bins: usize,
    pub chains: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 1, transitions: 200_000, burn_in: 2000, scan: "random".into(), thin: 1, bins: 50, chains: 1 }
    }
}

/// Contents of a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub run: RunSection,
    pub scenario: Option<ScenarioConfig>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), one_line(&e.to_string()))))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

pub fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Fully resolved settings for one invocation of `run`.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub run: RunSection,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let r = &self.run;
        if r.thin == 0 {
            return Err(Error::Config("thin must be >= 1".into()));
        }
        if r.bins < 2 {
            return Err(Error::Config("bins must be >= 2".into()));
        }
        if r.chains == 0 {
            return Err(Error::Config("chains must be >= 1".into()));
        }
        if r.transitions == 0 || r.burn_in >= r.transitions {
            return Err(Error::Config(format!(
                "need 0 <= burn-in < transitions, got burn-in {} and transitions {}",
                r.burn_in, r.transitions
            )));
        }
        Ok(())
    }
}
