use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use boundary_rl::boundary::InferenceConfig;
use boundary_rl::classifier::ClassifierConfig;
use boundary_rl::env::EnvConfig;
use boundary_rl::phantom::PhantomConfig;
use boundary_rl::ppo::PPOConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub n_train: usize,
    pub n_test: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { n_train: 64, n_test: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub sliding_window_stride: usize,
    pub include_sliding_window: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            sliding_window_stride: 4,
            include_sliding_window: true,
        }
    }
}

/// Whole-pipeline configuration as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub phantom: PhantomConfig,
    pub classifier: ClassifierConfig,
    pub env: EnvConfig,
    pub ppo: PPOConfig,
    pub boundary: InferenceConfig,
    pub eval: EvalConfig,
}


impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.phantom.validate()?;
        self.env.validate()?;
        self.ppo.validate()?;
        anyhow::ensure!(
            self.phantom.patch_size == self.env.patch_size && self.env.patch_size == self.classifier.patch_size,
            "phantom, classifier and env patch sizes must agree"
        );
        anyhow::ensure!(self.eval.sliding_window_stride >= 1, "sliding_window_stride must be >= 1");
        Ok(())
    }

    /// Canonical JSON used for hashing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
