//! The patch-walking MDP: translation dynamics, shaped reward, classifier
//! termination and noise masking of found patches.

use std::io::Write;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::classifier::PresenceClassifier;
use crate::error::{invalid, Error, Result};
use crate::image::GrayImage;
use crate::nn::Tensor;
use crate::patch::{center_range, clamp_center, fits, Center, WorkingImage};
use crate::phantom::Phantom;
use crate::rng::{purpose, stream, Rng};

/// Weight of the terminal component in the step reward.
pub const TERMINAL_WEIGHT: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(k: usize) -> Option<Action> {
        Self::ALL.get(k).copied()
    }

    /// Unit displacement (di, dj).
    pub fn unit(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }

    pub fn delta(self, step: usize) -> (isize, isize) {
        let (di, dj) = self.unit();
        (di * step as isize, dj * step as isize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentroidSource {
    Estimated,
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub patch_size: usize,
    pub step_size: usize,
    /// Episode horizon T.
    pub max_steps: usize,
    pub centroid: CentroidSource,
    pub noise_redraws: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            patch_size: 24,
            step_size: 2,
            max_steps: 400,
            centroid: CentroidSource::Estimated,
            noise_redraws: 3,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || !self.patch_size.is_multiple_of(2) {
            return Err(invalid("patch_size must be even and positive"));
        }
        if self.step_size == 0 {
            return Err(invalid("step_size must be >= 1"));
        }
        if self.max_steps == 0 {
            return Err(invalid("max_steps must be >= 1"));
        }
        Ok(())
    }
}

/// Intensity-weighted centroid after subtracting the image median and
/// keeping the positive part.
pub fn estimate_centroid(image: &GrayImage) -> Result<(f64, f64)> {
    if image.height() == 0 || image.width() == 0 {
        return Err(Error::EmptyForeground);
    }
    let bg = image.median();
    let (mut si, mut sj, mut sw) = (0.0, 0.0, 0.0);
    for i in 0..image.height() {
        for j in 0..image.width() {
            let w = (image.get(i, j) - bg).max(0.0);
            si += w * (i as f64 + 0.5);
            sj += w * (j as f64 + 0.5);
            sw += w;
        }
    }
    if sw <= 0.0 || !sw.is_finite() {
        return Err(Error::EmptyForeground);
    }
    Ok((si / sw, sj / sw))
}

pub fn movement_reward(prev: Center, next: Center, target: (f64, f64)) -> f64 {
    if next.distance_to(target) - prev.distance_to(target) <= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn step_reward(r_mov: f64, r_term: u8) -> f64 {
    r_mov + TERMINAL_WEIGHT * f64::from(r_term)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub c: Center,
    pub prev_dist: f64,
    pub t: usize,
    pub centroid: (f64, f64),
    pub terminated: bool,
    pub truncated: bool,
}

impl EnvState {
    pub fn is_done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub reward: f64,
    pub r_mov: f64,
    pub r_term: u8,
    pub presence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NoiseReport {
    pub redraws: usize,
    pub verified: bool,
}

/// One image being worked on across consecutive episodes. Noise masks
/// written after each termination persist into later episodes.
#[derive(Debug, Clone)]
pub struct ImageSession {
    pub config: EnvConfig,
    pub image: WorkingImage,
    pub centroid: (f64, f64),
    pub noise_mean: f64,
    pub noise_std: f64,
    pub terminations: Vec<Center>,
    pub noise_failures: usize,
}

impl ImageSession {
    pub fn new(phantom: &Phantom, config: &EnvConfig) -> Result<Self> {
        let centroid = match config.centroid {
            CentroidSource::Estimated => estimate_centroid(&phantom.image)?,
            CentroidSource::GroundTruth => phantom.centroid,
        };
        Self::with_centroid(phantom.image.clone(), centroid, config)
    }

    pub fn with_centroid(image: GrayImage, centroid: (f64, f64), config: &EnvConfig) -> Result<Self> {
        config.validate()?;
        let p = config.patch_size;
        if image.height() < p || image.width() < p {
            return Err(invalid("image smaller than the patch"));
        }
        Ok(Self {
            config: config.clone(),
            noise_mean: image.median(),
            noise_std: image.std(),
            image: WorkingImage::new(image),
            centroid,
            terminations: Vec::new(),
            noise_failures: 0,
        })
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    /// Start on a uniformly chosen image edge at a uniform position along it.
    pub fn reset(&self, episode_index: u64, seed: u64) -> EnvState {
        let mut rng = stream(seed, purpose::RESET, episode_index);
        let p = self.config.patch_size;
        let (ilo, ihi) = center_range(self.height(), p);
        let (jlo, jhi) = center_range(self.width(), p);
        let c = match rng.random_range(0..4u8) {
            0 => Center::new(ilo, rng.random_range(jlo..=jhi)),
            1 => Center::new(rng.random_range(ilo..=ihi), jhi),
            2 => Center::new(ihi, rng.random_range(jlo..=jhi)),
            _ => Center::new(rng.random_range(ilo..=ihi), jlo),
        };
        self.start_state(c)
    }

    pub fn reset_at(&self, c: Center) -> Result<EnvState> {
        if !fits(c, self.height(), self.width(), self.config.patch_size) {
            return Err(invalid(format!("patch at {c:?} leaves the image")));
        }
        Ok(self.start_state(c))
    }

    fn start_state(&self, c: Center) -> EnvState {
        EnvState {
            c,
            prev_dist: c.distance_to(self.centroid),
            t: 0,
            centroid: self.centroid,
            terminated: false,
            truncated: false,
        }
    }

    pub fn step(&self, state: &EnvState, action: Action, classifier: &dyn PresenceClassifier) -> Result<StepOutcome> {
        if state.is_done() {
            return Err(Error::EpisodeFinished);
        }
        let (di, dj) = action.delta(self.config.step_size);
        let next = clamp_center(
            state.c.i as isize + di,
            state.c.j as isize + dj,
            self.height(),
            self.width(),
            self.config.patch_size,
        );
        let r_mov = movement_reward(state.c, next, state.centroid);
        let presence = classifier.presence(&self.image, next);
        let r_term = u8::from(presence > classifier.decision_threshold());
        let terminated = r_term == 1;
        let t = state.t + 1;
        let next_state = EnvState {
            c: next,
            prev_dist: next.distance_to(state.centroid),
            t,
            centroid: state.centroid,
            terminated,
            truncated: !terminated && t >= self.config.max_steps,
        };
        Ok(StepOutcome {
            next_state,
            reward: step_reward(r_mov, r_term),
            r_mov,
            r_term,
            presence,
        })
    }

    /// Overwrites the footprint at the termination center with clipped
    /// Gaussian noise, redrawing until the classifier no longer fires there.
    pub fn apply_termination_noise(
        &mut self,
        state: &EnvState,
        classifier: &dyn PresenceClassifier,
        rng: &mut Rng,
    ) -> Result<NoiseReport> {
        if !state.terminated {
            return Err(invalid("noise masking requires a terminated episode"));
        }
        let p = self.config.patch_size;
        let (top, left) = state.c.top_left(p);
        let mut redraws = 0;
        loop {
            for i in top..top + p {
                for j in left..left + p {
                    let z: f64 = rng.sample(StandardNormal);
                    self.image.pixels.set(i, j, (self.noise_mean + self.noise_std * z).clamp(0.0, 1.0));
                    self.image.masked.set(i, j, true);
                }
            }
            if !classifier.detects(&self.image, state.c) {
                break;
            }
            if redraws == self.config.noise_redraws {
                self.noise_failures += 1;
                self.terminations.push(state.c);
                return Ok(NoiseReport { redraws, verified: false });
            }
            redraws += 1;
        }
        self.terminations.push(state.c);
        Ok(NoiseReport { redraws, verified: true })
    }
}

#[derive(Debug, Clone)]
pub struct Decision {
    pub action: Action,
    pub log_prob: f64,
    pub value: f64,
    pub features: Option<Tensor>,
}

/// Chooses actions from the current working image and state.
pub trait Controller {
    fn decide(&mut self, image: &WorkingImage, state: &EnvState, rng: &mut Rng) -> Result<Decision>;

    /// Value estimate used to bootstrap a truncated episode.
    fn value(&mut self, _image: &WorkingImage, _state: &EnvState) -> Result<f64> {
        Ok(0.0)
    }
}

/// Scripted policy: step along the axis with the larger offset to a target.
#[derive(Debug, Clone, Copy)]
pub struct GreedyOracle {
    pub target: (f64, f64),
}

impl GreedyOracle {
    pub fn action(&self, c: Center) -> Action {
        let (ci, cj) = c.as_point();
        let (di, dj) = (self.target.0 - ci, self.target.1 - cj);
        if di.abs() >= dj.abs() {
            if di < 0.0 {
                Action::Up
            } else {
                Action::Down
            }
        } else if dj < 0.0 {
            Action::Left
        } else {
            Action::Right
        }
    }
}

impl Controller for GreedyOracle {
    fn decide(&mut self, _: &WorkingImage, state: &EnvState, _: &mut Rng) -> Result<Decision> {
        Ok(Decision {
            action: self.action(state.c),
            log_prob: 0.0,
            value: 0.0,
            features: None,
        })
    }
}

/// Always picks the same action.
#[derive(Debug, Clone, Copy)]
pub struct FixedAction(pub Action);

impl Controller for FixedAction {
    fn decide(&mut self, _: &WorkingImage, _: &EnvState, _: &mut Rng) -> Result<Decision> {
        Ok(Decision {
            action: self.0,
            log_prob: 0.0,
            value: 0.0,
            features: None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub t: usize,
    pub from: Center,
    pub to: Center,
    pub action: Action,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub r_mov: f64,
    pub r_term: u8,
    pub features: Option<Tensor>,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub steps: Vec<Transition>,
    pub terminated: bool,
    pub truncated: bool,
    /// Value of the state after the last step; zero unless truncated.
    pub bootstrap_value: f64,
    pub noise: Option<NoiseReport>,
}

#[derive(Serialize)]
struct StepRecord {
    t: usize,
    c: [usize; 2],
    action: Action,
    r_mov: f64,
    r_term: u8,
    reward: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn final_center(&self) -> Option<Center> {
        self.steps.last().map(|s| s.to)
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// One JSON object per step.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for s in &self.steps {
            let rec = StepRecord {
                t: s.t,
                c: [s.to.i, s.to.j],
                action: s.action,
                r_mov: s.r_mov,
                r_term: s.r_term,
                reward: s.reward,
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Runs one episode on `session`, starting at `start` or at a seeded edge
/// reset, and masks the found patch on success.
pub fn run_episode(
    session: &mut ImageSession,
    controller: &mut dyn Controller,
    classifier: &dyn PresenceClassifier,
    start: Option<Center>,
    episode_index: u64,
    seed: u64,
) -> Result<Trajectory> {
    let mut state = match start {
        Some(c) => session.reset_at(c)?,
        None => session.reset(episode_index, seed),
    };
    let mut policy_rng = stream(seed, purpose::POLICY, episode_index);
    let mut traj = Trajectory::default();
    while !state.is_done() {
        let d = controller.decide(&session.image, &state, &mut policy_rng)?;
        let out = session.step(&state, d.action, classifier)?;
        traj.steps.push(Transition {
            t: state.t,
            from: state.c,
            to: out.next_state.c,
            action: d.action,
            log_prob: d.log_prob,
            value: d.value,
            reward: out.reward,
            r_mov: out.r_mov,
            r_term: out.r_term,
            features: d.features,
        });
        state = out.next_state;
    }
    traj.terminated = state.terminated;
    traj.truncated = state.truncated;
    if state.truncated {
        traj.bootstrap_value = controller.value(&session.image, &state)?;
    }
    if state.terminated {
        let mut noise_rng = stream(seed, purpose::NOISE, episode_index);
        traj.noise = Some(session.apply_termination_noise(&state, classifier, &mut noise_rng)?);
    }
    Ok(traj)
}
