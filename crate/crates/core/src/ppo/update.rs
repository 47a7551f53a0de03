use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::env::Trajectory;
use crate::error::{invalid, Error, Result};
use crate::nn::{AdamState, ParamSet, Tensor};
use crate::rng::Rng;

use super::model::{PolicyModel, OUTPUTS};
use super::returns::{compute_returns_advantages, normalize};
use super::PPOConfig;

/// Flattened transitions ready for optimization.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub features: Vec<Tensor>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl Batch {
    /// Advantages are normalized over the whole batch.
    pub fn from_trajectories(trajs: &[Trajectory], gamma: f64, lambda: f64) -> Result<Self> {
        let mut b = Batch::default();
        for tr in trajs {
            let (ret, adv) = compute_returns_advantages(tr, gamma, lambda)?;
            for (s, (r, a)) in tr.steps.iter().zip(ret.into_iter().zip(adv)) {
                let f = s.features.clone().ok_or_else(|| invalid("trajectory recorded without features"))?;
                b.features.push(f);
                b.actions.push(s.action.index());
                b.old_log_probs.push(s.log_prob);
                b.returns.push(r);
                b.advantages.push(a);
            }
        }
        if b.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        normalize(&mut b.advantages);
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Per-sample clipped surrogate `min(ρÂ, clip(ρ, 1-ε, 1+ε)Â)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    /// Total loss being minimized.
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
}

/// Loss over `idx` and its gradient. The value term is measured in units
/// of the model's value scale.
pub fn ppo_loss(model: &PolicyModel, batch: &Batch, idx: &[usize], cfg: &PPOConfig) -> Result<(LossStats, ParamSet)> {
    if idx.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let scale = model.net.value_scale;
    let inv_n = 1.0 / idx.len() as f64;
    let mut grads = ParamSet::zeros_like(&model.params);
    let mut st = LossStats::default();
    let mut clipped = 0usize;
    for &k in idx {
        let (out, cache) = model.forward(&batch.features[k])?;
        let a = batch.actions[k];
        let adv = batch.advantages[k];
        let ratio = (out.log_probs[a] - batch.old_log_probs[k]).exp();
        let surr = clipped_surrogate(ratio, adv, cfg.clip_eps);
        let unclipped_active = ratio * adv <= ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
        clipped += usize::from(!unclipped_active);
        let h = out.entropy();
        let verr = (out.value - batch.returns[k]) / scale;

        st.policy_loss -= surr * inv_n;
        st.value_loss += verr * verr * inv_n;
        st.entropy += h * inv_n;
        st.mean_ratio += ratio * inv_n;

        let g_logp = if unclipped_active { -adv * ratio } else { 0.0 };
        let probs = out.probs();
        let mut g = [0.0; OUTPUTS];
        for j in 0..4 {
            let onehot = if j == a { 1.0 } else { 0.0 };
            let dh = -probs[j] * (out.log_probs[j] + h);
            g[j] = inv_n * (g_logp * (onehot - probs[j]) - cfg.entropy_coef * dh);
        }
        g[4] = inv_n * cfg.value_coef * 2.0 * verr;
        model.params.backward_into(&cache, &g, &mut grads)?;
    }
    st.clip_fraction = clipped as f64 * inv_n;
    st.loss = st.policy_loss + cfg.value_coef * st.value_loss - cfg.entropy_coef * st.entropy;
    Ok((st, grads))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
}

/// `update_epochs` passes of shuffled minibatches. On a non-finite loss or
/// gradient the model and optimizer are restored and an error returned.
pub fn ppo_update(
    model: &mut PolicyModel,
    adam: &mut AdamState,
    batch: &Batch,
    cfg: &PPOConfig,
    rng: &mut Rng,
) -> Result<UpdateStats> {
    if batch.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let saved = (model.params.clone(), adam.clone());
    let result = run_epochs(model, adam, batch, cfg, rng);
    if result.is_err() {
        model.params = saved.0;
        *adam = saved.1;
    }
    result
}

fn run_epochs(
    model: &mut PolicyModel,
    adam: &mut AdamState,
    batch: &Batch,
    cfg: &PPOConfig,
    rng: &mut Rng,
) -> Result<UpdateStats> {
    let mut stats = UpdateStats::default();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mb = cfg.minibatch_size.max(1);
    for _ in 0..cfg.update_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(mb) {
            let (st, mut grads) = ppo_loss(model, batch, chunk, cfg)?;
            if !st.loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFinite("ppo loss"));
            }
            let norm = grads.norm();
            if cfg.max_grad_norm > 0.0 && norm > cfg.max_grad_norm {
                grads.scale(cfg.max_grad_norm / norm);
            }
            adam.step(&mut model.params, &grads)?;
            stats.policy_loss += st.policy_loss;
            stats.value_loss += st.value_loss;
            stats.entropy += st.entropy;
            stats.mean_ratio += st.mean_ratio;
            stats.clip_fraction += st.clip_fraction;
            stats.minibatches += 1;
        }
    }
    if stats.minibatches > 0 {
        let n = stats.minibatches as f64;
        stats.policy_loss /= n;
        stats.value_loss /= n;
        stats.entropy /= n;
        stats.mean_ratio /= n;
        stats.clip_fraction /= n;
    }
    if !model.params.is_finite() {
        return Err(Error::NonFinite("policy parameters"));
    }
    Ok(stats)
}
