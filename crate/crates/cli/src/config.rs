//! Experiment configuration files.
//!
//! A config is one JSON object. Training hyperparameters live under `train`
//! (same keys as [`TrainConfig`]); the dataset comes either from CSV paths or
//! from a generated blob `fixture`. Unknown keys are rejected at every level.
//!
//! ```json
//! {
//!   "train": { "k": 10, "T": 10, "seed": 3 },
//!   "fixture": { "classes": 5, "rate": 0.3 },
//!   "sweep": { "param": "k", "values": [3, 10, 20], "seeds": [0, 1] }
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use relabel_core::experiment::BlobFixture;
use relabel_core::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    /// Training CSV; when absent the `fixture` is generated instead.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_data: Option<PathBuf>,
    /// Held-out CSV with `true_label`, used for the final accuracy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_data: Option<PathBuf>,
    pub fixture: BlobFixture,
    /// Output directory. Not part of the resolved config.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            train_data: None,
            test_data: None,
            fixture: BlobFixture::default(),
            out: None,
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// A key of the `train` section, e.g. `k`, `n_bins`, `lambda` or `T`.
    pub param: String,
    pub values: Vec<Value>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }

    /// Sets the run seed for both training and fixture generation.
    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.fixture.seed = seed;
    }

    /// Checks hyperparameters and that every input path exists.
    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate()?;
        for path in self.train_data.iter().chain(&self.test_data) {
            if !path.is_file() {
                return Err(CliError::Config(format!("input file {} does not exist", path.display())));
            }
        }
        if self.train_data.is_none() && !(0.0..1.0).contains(&self.fixture.rate) {
            return Err(CliError::Config(format!(
                "fixture noise rate must be in [0, 1), got {}",
                self.fixture.rate
            )));
        }
        Ok(())
    }

    /// Canonical JSON with every default filled in.
    pub fn resolved_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.resolved_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Returns `train` with `param` replaced by `value`, type-checked through
/// the same deserializer that reads config files.
pub fn with_param(train: &TrainConfig, param: &str, value: &Value) -> Result<TrainConfig, CliError> {
    if matches!(param, "seed" | "ablations") {
        return Err(CliError::Config(format!("`{param}` cannot be swept")));
    }
    let mut obj = serde_json::to_value(train).expect("train config serializes");
    let map = obj.as_object_mut().expect("train config is an object");
    if !map.contains_key(param) {
        return Err(CliError::Config(format!("unknown sweep parameter `{param}`")));
    }
    map.insert(param.to_string(), value.clone());
    let out: TrainConfig = serde_json::from_value(obj)
        .map_err(|e| CliError::Config(format!("bad value {value} for `{param}`: {e}")))?;
    out.validate()?;
    Ok(out)
}

/// Parses `3,10,20` into JSON scalars, keeping integers as integers.
pub fn parse_grid(text: &str) -> Result<Vec<Value>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            serde_json::from_str::<Value>(t)
                .ok()
                .filter(Value::is_number)
                .ok_or_else(|| CliError::Config(format!("grid value `{t}` is not a number")))
        })
        .collect()
}
