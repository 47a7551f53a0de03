use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::env::{Action, Controller, Decision, EnvState};
use crate::error::{invalid, Error, Result};
use crate::nn::{self, log_softmax, Activation, Architecture, Cache, LayerSpec, ParamSet, Tensor};
use crate::patch::WorkingImage;
use crate::rng::Rng;

use super::features::build_state_features;

/// Logits for the four actions followed by one value output.
pub const OUTPUTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyNetConfig {
    /// Side of the resampled state grid.
    pub feature_size: usize,
    pub conv: Vec<ConvSpec>,
    pub hidden: usize,
    /// Multiplier applied to the raw value output.
    pub value_scale: f64,
}

impl Default for PolicyNetConfig {
    fn default() -> Self {
        let c = |channels, kernel, stride| ConvSpec { channels, kernel, stride };
        Self {
            feature_size: 32,
            conv: vec![c(8, 4, 2), c(16, 3, 2), c(16, 3, 1)],
            hidden: 32,
            value_scale: 100.0,
        }
    }
}

impl PolicyNetConfig {
    pub fn architecture(&self) -> Architecture {
        let mut layers: Vec<LayerSpec> = self
            .conv
            .iter()
            .map(|c| LayerSpec::Conv {
                out_channels: c.channels,
                kernel: c.kernel,
                stride: c.stride,
                activation: Activation::Relu,
            })
            .collect();
        layers.push(LayerSpec::Dense {
            outputs: self.hidden,
            activation: Activation::Relu,
        });
        layers.push(LayerSpec::Dense {
            outputs: OUTPUTS,
            activation: Activation::Identity,
        });
        Architecture {
            input: [3, self.feature_size, self.feature_size],
            layers,
        }
    }
}

/// Shared trunk with a categorical policy head and a value head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    pub params: ParamSet,
    pub net: PolicyNetConfig,
    pub patch_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub log_probs: [f64; 4],
    pub value: f64,
}

impl PolicyOutput {
    fn from_raw(raw: &[f64], value_scale: f64) -> Result<Self> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy output"));
        }
        let lp = log_softmax(&raw[..4]);
        Ok(Self {
            log_probs: [lp[0], lp[1], lp[2], lp[3]],
            value: raw[4] * value_scale,
        })
    }

    pub fn probs(&self) -> [f64; 4] {
        self.log_probs.map(f64::exp)
    }

    pub fn entropy(&self) -> f64 {
        nn::entropy(&self.log_probs)
    }

    /// Highest-probability action; the lowest index wins ties.
    pub fn greedy(&self) -> Action {
        let mut best = 0;
        for k in 1..4 {
            if self.log_probs[k] > self.log_probs[best] {
                best = k;
            }
        }
        Action::ALL[best]
    }
}

/// Draws an index from a discrete distribution.
pub fn sample_categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

impl PolicyModel {
    pub fn init(net: &PolicyNetConfig, patch_size: usize, seed: u64) -> Result<Self> {
        if net.value_scale <= 0.0 || !net.value_scale.is_finite() {
            return Err(invalid("value_scale must be positive"));
        }
        Ok(Self {
            params: ParamSet::init(net.architecture(), seed)?,
            net: net.clone(),
            patch_size,
        })
    }

    pub fn features(&self, image: &WorkingImage, state: &EnvState) -> Tensor {
        build_state_features(image, state.c, self.patch_size, self.net.feature_size)
    }

    pub fn evaluate(&self, features: &Tensor) -> Result<PolicyOutput> {
        PolicyOutput::from_raw(&self.params.predict(features.as_slice())?, self.net.value_scale)
    }

    pub(crate) fn forward(&self, features: &Tensor) -> Result<(PolicyOutput, Cache)> {
        let (out, cache) = self.params.forward(features)?;
        Ok((PolicyOutput::from_raw(out.as_slice(), self.net.value_scale)?, cache))
    }

    /// Samples an action; returns it with its log-probability and the value.
    pub fn act(&self, features: &Tensor, rng: &mut Rng) -> Result<(Action, f64, f64)> {
        let out = self.evaluate(features)?;
        let k = sample_categorical(&out.probs(), rng);
        Ok((Action::ALL[k], out.log_probs[k], out.value))
    }

    fn meta(&self) -> serde_json::Value {
        serde_json::json!({
            "model": "policy",
            "patch_size": self.patch_size,
            "net": self.net,
        })
    }

    pub fn to_bytes(&self, seed: Option<u64>) -> Result<Vec<u8>> {
        nn::checkpoint::encode(&self.params, seed, self.meta())
    }

    pub fn save(&self, path: impl AsRef<Path>, seed: Option<u64>) -> Result<()> {
        nn::checkpoint::save(path, &self.params, seed, self.meta())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (params, header) = nn::checkpoint::load(path)?;
        if header.meta["model"] != "policy" {
            return Err(Error::MalformedCheckpoint("not a policy checkpoint".into()));
        }
        let net: PolicyNetConfig = serde_json::from_value(header.meta["net"].clone())?;
        let patch_size = header.meta["patch_size"]
            .as_u64()
            .ok_or_else(|| Error::MalformedCheckpoint("missing patch_size".into()))? as usize;
        if params.architecture() != &net.architecture() {
            return Err(Error::MalformedCheckpoint("architecture differs from net config".into()));
        }
        Ok(Self { params, net, patch_size })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    Greedy,
}

/// Drives the environment with a [`PolicyModel`].
pub struct PolicyController<'a> {
    pub model: &'a PolicyModel,
    pub mode: ActMode,
    /// Keep state features on each decision for later updates.
    pub record: bool,
}

impl Controller for PolicyController<'_> {
    fn decide(&mut self, image: &WorkingImage, state: &EnvState, rng: &mut Rng) -> Result<Decision> {
        let f = self.model.features(image, state);
        let out = self.model.evaluate(&f)?;
        let k = match self.mode {
            ActMode::Sample => sample_categorical(&out.probs(), rng),
            ActMode::Greedy => out.greedy().index(),
        };
        Ok(Decision {
            action: Action::ALL[k],
            log_prob: out.log_probs[k],
            value: out.value,
            features: self.record.then_some(f),
        })
    }

    fn value(&mut self, image: &WorkingImage, state: &EnvState) -> Result<f64> {
        Ok(self.model.evaluate(&self.model.features(image, state))?.value)
    }
}
