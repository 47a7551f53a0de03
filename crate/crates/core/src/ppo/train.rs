use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::classifier::PresenceClassifier;
use crate::env::{run_episode, EnvConfig, ImageSession, Trajectory};
use crate::error::{invalid, Result};
use crate::nn::{AdamConfig, AdamState};
use crate::phantom::Phantom;
use crate::rng::{mix_seed, purpose, stream};

use super::model::{ActMode, PolicyController, PolicyModel};
use super::update::{ppo_update, Batch};
use super::PPOConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateLog {
    pub update: usize,
    pub episodes: usize,
    pub transitions: usize,
    pub termination_rate: f64,
    pub mean_return: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub log: Vec<UpdateLog>,
    pub converged: bool,
    pub episodes: usize,
    pub terminations: usize,
    /// Terminations whose noise mask still triggered the classifier.
    pub noise_failures: usize,
}

impl TrainReport {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "update,termination_rate,mean_return,policy_loss,value_loss,entropy")?;
        for l in &self.log {
            writeln!(
                w,
                "{},{:.6},{:.6},{:.8},{:.8},{:.8}",
                l.update, l.termination_rate, l.mean_return, l.policy_loss, l.value_loss, l.entropy
            )?;
        }
        Ok(())
    }
}

/// Supplies the reward classifier for dataset image `k`.
pub type ClassifierFor<'a> = dyn Fn(usize) -> &'a (dyn PresenceClassifier + 'a) + 'a;

/// Runs `episodes` consecutive episodes on one image with a sampling policy.
pub fn collect_image(
    phantom: &Phantom,
    model: &PolicyModel,
    classifier: &dyn PresenceClassifier,
    env: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<(Vec<Trajectory>, ImageSession)> {
    let mut session = ImageSession::new(phantom, env)?;
    let mut ctl = PolicyController {
        model,
        mode: ActMode::Sample,
        record: true,
    };
    let trajs = (0..episodes as u64)
        .map(|m| run_episode(&mut session, &mut ctl, classifier, None, m, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok((trajs, session))
}

/// Synchronous PPO: sample an image, run `episodes_per_image` episodes on
/// it, repeat until the batch is full, then update. Stops at `max_updates`
/// or once the moving-average termination rate reaches the target.
pub fn train(
    dataset: &[Phantom],
    classifier: &ClassifierFor<'_>,
    env: &EnvConfig,
    cfg: &PPOConfig,
    seed: u64,
    on_update: &mut dyn FnMut(&PolicyModel, &UpdateLog) -> Result<()>,
) -> Result<(PolicyModel, TrainReport)> {
    cfg.validate()?;
    env.validate()?;
    if dataset.is_empty() {
        return Err(invalid("empty training set"));
    }
    let mut model = PolicyModel::init(&cfg.net, env.patch_size, mix_seed(seed, purpose::INIT))?;
    let mut adam = AdamState::new(&model.params, AdamConfig::with_lr(cfg.lr));
    let mut pick = stream(seed, purpose::TRAIN, 0);
    let mut shuffle = stream(seed, purpose::TRAIN, 1);
    let mut report = TrainReport::default();
    let mut draws = 0u64;
    for update in 1..=cfg.max_updates {
        let mut trajs = Vec::new();
        let mut transitions = 0;
        while transitions < cfg.batch_size {
            let k = pick.random_range(0..dataset.len());
            let image_seed = mix_seed(seed, draws);
            draws += 1;
            let (batch, session) =
                collect_image(&dataset[k], &model, classifier(k), env, cfg.episodes_per_image, image_seed)?;
            report.noise_failures += session.noise_failures;
            transitions += batch.iter().map(Trajectory::len).sum::<usize>();
            trajs.extend(batch);
        }
        let terminated = trajs.iter().filter(|t| t.terminated).count();
        report.episodes += trajs.len();
        report.terminations += terminated;
        let batch = Batch::from_trajectories(&trajs, cfg.gamma, cfg.gae_lambda)?;
        let stats = ppo_update(&mut model, &mut adam, &batch, cfg, &mut shuffle)?;
        let log = UpdateLog {
            update,
            episodes: trajs.len(),
            transitions,
            termination_rate: terminated as f64 / trajs.len() as f64,
            mean_return: trajs.iter().map(Trajectory::total_reward).sum::<f64>() / trajs.len() as f64,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            mean_ratio: stats.mean_ratio,
        };
        report.log.push(log);
        on_update(&model, &log)?;
        if update >= cfg.min_updates && report.log.len() >= cfg.convergence_window {
            let recent = &report.log[report.log.len() - cfg.convergence_window..];
            let ma = recent.iter().map(|l| l.termination_rate).sum::<f64>() / recent.len() as f64;
            if ma >= cfg.target_termination_rate {
                report.converged = true;
                break;
            }
        }
    }
    Ok((model, report))
}
