//! Actor-critic policy over patch moves, trained with clipped PPO.

mod features;
mod model;
mod returns;
mod train;
mod update;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use crate::env::{Trajectory, Transition};
pub use features::{build_state_features, resample_area};
pub use model::{
    sample_categorical, ActMode, ConvSpec, PolicyController, PolicyModel, PolicyNetConfig, PolicyOutput, OUTPUTS,
};
pub use returns::{compute_returns_advantages, normalize};
pub use train::{collect_image, train, ClassifierFor, TrainReport, UpdateLog};
pub use update::{clipped_surrogate, ppo_loss, ppo_update, Batch, LossStats, UpdateStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PPOConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub lr: f64,
    /// Minimum transitions collected per update.
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub update_epochs: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    /// Consecutive episodes on one image (noise masks accumulate).
    pub episodes_per_image: usize,
    pub max_updates: usize,
    pub min_updates: usize,
    pub target_termination_rate: f64,
    pub convergence_window: usize,
    pub checkpoint_every: usize,
    pub net: PolicyNetConfig,
}

impl Default for PPOConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            lr: 3e-4,
            batch_size: 4096,
            minibatch_size: 512,
            update_epochs: 4,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            episodes_per_image: 24,
            max_updates: 60,
            min_updates: 10,
            target_termination_rate: 0.95,
            convergence_window: 5,
            checkpoint_every: 10,
            net: PolicyNetConfig::default(),
        }
    }
}

impl PPOConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid("gamma must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(invalid("gae_lambda must lie in [0, 1]"));
        }
        if self.clip_eps <= 0.0 || self.lr <= 0.0 {
            return Err(invalid("clip_eps and lr must be positive"));
        }
        if self.batch_size == 0 || self.minibatch_size == 0 || self.episodes_per_image == 0 {
            return Err(invalid("batch sizes and episodes_per_image must be >= 1"));
        }
        if self.convergence_window == 0 {
            return Err(invalid("convergence_window must be >= 1"));
        }
        Ok(())
    }
}
