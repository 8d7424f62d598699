//! TOML run configuration. Every table is optional and every key has a
//! default; command-line flags override individual keys.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataprep::SyntheticCityConfig;
use crate::error::{GsneError, Result};
use crate::eval::RegressorDefaults;
use crate::geo_graph::GraphConfig;
use crate::trainer::TrainConfig;

pub const FEATURE_SETS: [&str; 5] = ["raw", "raw+gsne_1st", "raw+gsne_2nd", "raw+gsne_both", "gsne_only"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Share of houses used for embedding training and regressor fitting.
    pub train_fraction: f64,
    /// Comma-separated regressor names.
    pub regressors: String,
    /// Comma-separated feature-set names; empty means every available set.
    pub feature_sets: String,
    /// Append embedding variances to the mean columns.
    pub include_variance: bool,
    pub bootstrap_replicates: usize,
    pub bootstrap_level: f64,
    pub models: RegressorDefaults,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            train_fraction: 0.8,
            regressors: "ridge,krr,gbt".into(),
            feature_sets: String::new(),
            include_variance: false,
            bootstrap_replicates: 500,
            bootstrap_level: 0.95,
            models: RegressorDefaults::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Overrides the seeds of every stage when set.
    pub seed: Option<u64>,
    pub graph: GraphConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub synth: SyntheticCityConfig,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut c: Config = toml::from_str(text).map_err(|e| GsneError::Config(e.to_string()))?;
        if let Some(s) = c.seed {
            c.set_seed(s);
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GsneError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            GsneError::Config(m) => GsneError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.train.seed = seed;
        self.synth.seed = seed;
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| GsneError::Config(e.to_string()))
    }
}
