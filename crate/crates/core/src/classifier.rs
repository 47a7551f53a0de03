//! Patch-level presence classifier: trained with binary cross-entropy on
//! patch labels, then frozen and used as the controller's reward signal.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::{GrayImage, Mask};
use crate::nn::{self, bce_loss, Activation, AdamConfig, AdamState, Architecture, LayerSpec, ParamSet, Tensor};
use crate::patch::{center_range, Center, WorkingImage};
use crate::phantom::Phantom;
use crate::rng::{purpose, stream};

/// Probabilities strictly above this count as "present".
pub const DECISION_THRESHOLD: f64 = 0.9;

pub fn binarize(prob: f64) -> u8 {
    u8::from(prob > DECISION_THRESHOLD)
}

/// Anything that scores ROI presence for the patch centered at `c`.
pub trait PresenceClassifier {
    fn patch_size(&self) -> usize;

    fn presence(&self, image: &WorkingImage, c: Center) -> f64;

    fn decision_threshold(&self) -> f64 {
        DECISION_THRESHOLD
    }

    fn detects(&self, image: &WorkingImage, c: Center) -> bool {
        self.presence(image, c) > self.decision_threshold()
    }
}

impl<T: PresenceClassifier + ?Sized> PresenceClassifier for &T {
    fn patch_size(&self) -> usize {
        (**self).patch_size()
    }
    fn presence(&self, image: &WorkingImage, c: Center) -> f64 {
        (**self).presence(image, c)
    }
    fn decision_threshold(&self) -> f64 {
        (**self).decision_threshold()
    }
}

/// Fraction of the footprint covered by `mask`, skipping pixels in `excluded`.
pub fn overlap_fraction(mask: &Mask, excluded: Option<&Mask>, c: Center, patch: usize) -> f64 {
    let (t, l) = c.top_left(patch);
    let hits = match excluded {
        None => mask.count_window(t, l, patch),
        Some(ex) => {
            let mut n = 0;
            for i in t..t + patch {
                for j in l..l + patch {
                    n += usize::from(mask.get(i, j) && !ex.get(i, j));
                }
            }
            n
        }
    };
    hits as f64 / (patch * patch) as f64
}

/// Patch label rule: present iff the ROI covers at least `threshold` of the footprint.
pub fn patch_label(mask: &Mask, c: Center, patch: usize, threshold: f64) -> u8 {
    u8::from(overlap_fraction(mask, None, c, patch) >= threshold)
}

/// Ground-truth oracle: presence 1 iff the ROI pixels still visible (not
/// overwritten by termination noise) cover at least `threshold` of the patch.
#[derive(Debug, Clone)]
pub struct OverlapOracle {
    pub mask: Mask,
    pub patch_size: usize,
    pub threshold: f64,
}

impl PresenceClassifier for OverlapOracle {
    fn patch_size(&self) -> usize {
        self.patch_size
    }

    fn presence(&self, image: &WorkingImage, c: Center) -> f64 {
        let f = overlap_fraction(&self.mask, Some(&image.masked), c, self.patch_size);
        if f >= self.threshold {
            1.0
        } else {
            0.0
        }
    }
}

/// Presence 1 iff the patch center pixel lies inside the ROI.
#[derive(Debug, Clone)]
pub struct CenterOracle {
    pub mask: Mask,
    pub patch_size: usize,
}

impl PresenceClassifier for CenterOracle {
    fn patch_size(&self) -> usize {
        self.patch_size
    }

    fn presence(&self, _: &WorkingImage, c: Center) -> f64 {
        if self.mask.get(c.i, c.j) {
            1.0
        } else {
            0.0
        }
    }
}

/// Fixed probability everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantClassifier {
    pub patch_size: usize,
    pub prob: f64,
}

impl PresenceClassifier for ConstantClassifier {
    fn patch_size(&self) -> usize {
        self.patch_size
    }

    fn presence(&self, _: &WorkingImage, _: Center) -> f64 {
        self.prob
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSample {
    pub patch: GrayImage,
    pub label: u8,
    pub source: usize,
    pub center: Center,
}

/// Samples `count` patches with uniformly random centers, `round(count·balance)`
/// of them positive, returned in shuffled order.
pub fn extract_patches(
    dataset: &[Phantom],
    count: usize,
    patch: usize,
    balance: f64,
    overlap_threshold: f64,
    seed: u64,
) -> Result<Vec<PatchSample>> {
    if dataset.is_empty() {
        return Err(invalid("empty dataset"));
    }
    if !(0.0..=1.0).contains(&balance) {
        return Err(invalid("balance must lie in [0, 1]"));
    }
    if dataset.iter().any(|p| patch > p.height().min(p.width())) {
        return Err(invalid(format!("patch {patch} larger than an image")));
    }
    let positives = (count as f64 * balance).round() as usize;
    let mut rng = stream(seed, purpose::PATCHES, 0);
    let mut out = Vec::with_capacity(count);
    const ATTEMPTS: usize = 20_000;
    for k in 0..count {
        let want = u8::from(k < positives);
        let mut found = None;
        for _ in 0..ATTEMPTS {
            let src = rng.random_range(0..dataset.len());
            let ph = &dataset[src];
            let (ilo, ihi) = center_range(ph.height(), patch);
            let (jlo, jhi) = center_range(ph.width(), patch);
            let c = Center::new(rng.random_range(ilo..=ihi), rng.random_range(jlo..=jhi));
            if patch_label(&ph.mask, c, patch, overlap_threshold) == want {
                let (t, l) = c.top_left(patch);
                found = Some(PatchSample {
                    patch: ph.image.window(t, l, patch),
                    label: want,
                    source: src,
                    center: c,
                });
                break;
            }
        }
        out.push(found.ok_or_else(|| Error::ImpossibleBalance {
            wanted: if want == 1 { positives } else { count - positives },
            kind: if want == 1 { "positive" } else { "negative" },
            reason: format!("no matching patch in {ATTEMPTS} draws"),
        })?);
    }
    out.shuffle(&mut rng);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub patch_size: usize,
    /// Minimum ROI coverage of the footprint for a positive label.
    pub overlap_threshold: f64,
    pub decision_threshold: f64,
    pub n_patches: usize,
    pub balance: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub holdout_fraction: f64,
    pub shuffle: bool,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            patch_size: 24,
            overlap_threshold: 0.075,
            decision_threshold: DECISION_THRESHOLD,
            n_patches: 8000,
            balance: 0.5,
            lr: 1e-4,
            batch_size: 16,
            epochs: 12,
            holdout_fraction: 0.1,
            shuffle: true,
            seed: 0,
        }
    }
}

/// Two stride-2 convolutions, one dense layer, sigmoid output.
pub fn default_architecture(patch: usize) -> Architecture {
    Architecture {
        input: [1, patch, patch],
        layers: vec![
            LayerSpec::Conv {
                out_channels: 8,
                kernel: 4,
                stride: 2,
                activation: Activation::Relu,
            },
            LayerSpec::Conv {
                out_channels: 16,
                kernel: 3,
                stride: 2,
                activation: Activation::Relu,
            },
            LayerSpec::Dense {
                outputs: 1,
                activation: Activation::Sigmoid,
            },
        ],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub params: ParamSet,
    pub patch_size: usize,
    pub decision_threshold: f64,
}

/// Pixel intensities are shifted by this before entering the network.
const INPUT_OFFSET: f64 = 0.5;

impl ClassifierModel {
    pub fn init(config: &ClassifierConfig, seed: u64) -> Result<Self> {
        let params = ParamSet::init(default_architecture(config.patch_size), seed)?;
        Ok(Self {
            params,
            patch_size: config.patch_size,
            decision_threshold: config.decision_threshold,
        })
    }

    fn input(&self, patch: &GrayImage) -> Result<Tensor> {
        if patch.shape() != (self.patch_size, self.patch_size) {
            return Err(Error::ShapeMismatch {
                expected: vec![self.patch_size, self.patch_size],
                actual: vec![patch.height(), patch.width()],
            });
        }
        Tensor::new(
            vec![1, self.patch_size, self.patch_size],
            patch.as_slice().iter().map(|v| v - INPUT_OFFSET).collect(),
        )
    }

    pub fn predict_presence(&self, patch: &GrayImage) -> Result<f64> {
        let x = self.input(patch)?;
        Ok(self.params.predict(x.as_slice())?[0])
    }

    pub fn binarize(&self, prob: f64) -> u8 {
        u8::from(prob > self.decision_threshold)
    }

    /// Mean BCE and gradient over a batch.
    pub fn batch_loss_grad(&self, batch: &[&PatchSample]) -> Result<(f64, ParamSet)> {
        let mut grads = ParamSet::zeros_like(&self.params);
        let mut total = 0.0;
        let scale = 1.0 / batch.len() as f64;
        for s in batch {
            let (out, cache) = self.params.forward(&self.input(&s.patch)?)?;
            let (loss, dp) = bce_loss(out.as_slice()[0], f64::from(s.label));
            total += loss;
            self.params.backward_into(&cache, &[dp * scale], &mut grads)?;
        }
        Ok((total * scale, grads))
    }

    pub fn evaluate(&self, samples: &[PatchSample]) -> Result<(f64, f64)> {
        if samples.is_empty() {
            return Ok((f64::NAN, f64::NAN));
        }
        let mut bce = 0.0;
        let mut correct = 0usize;
        for s in samples {
            let p = self.predict_presence(&s.patch)?;
            bce += bce_loss(p, f64::from(s.label)).0;
            correct += usize::from(self.binarize(p) == s.label);
        }
        let n = samples.len() as f64;
        Ok((bce / n, correct as f64 / n))
    }

    pub fn save(&self, path: impl AsRef<Path>, seed: Option<u64>) -> Result<()> {
        nn::checkpoint::save(path, &self.params, seed, self.meta())
    }

    pub fn to_bytes(&self, seed: Option<u64>) -> Result<Vec<u8>> {
        nn::checkpoint::encode(&self.params, seed, self.meta())
    }

    fn meta(&self) -> serde_json::Value {
        serde_json::json!({
            "model": "presence_classifier",
            "patch_size": self.patch_size,
            "decision_threshold": self.decision_threshold,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (params, header) = nn::checkpoint::load(path)?;
        if header.meta["model"] != "presence_classifier" {
            return Err(Error::MalformedCheckpoint("not a presence classifier".into()));
        }
        let patch_size = header.meta["patch_size"]
            .as_u64()
            .ok_or_else(|| Error::MalformedCheckpoint("missing patch_size".into()))? as usize;
        let decision_threshold = header.meta["decision_threshold"].as_f64().unwrap_or(DECISION_THRESHOLD);
        Ok(Self {
            params,
            patch_size,
            decision_threshold,
        })
    }
}

impl PresenceClassifier for ClassifierModel {
    fn patch_size(&self) -> usize {
        self.patch_size
    }

    fn presence(&self, image: &WorkingImage, c: Center) -> f64 {
        self.predict_presence(&image.patch(c, self.patch_size))
            .expect("patch extracted at model size")
    }

    fn decision_threshold(&self) -> f64 {
        self.decision_threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_bce: f64,
    pub holdout_bce: f64,
    pub holdout_acc: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingReport {
    pub epochs: Vec<EpochLog>,
    /// Mean batch BCE of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    /// Epoch whose weights were returned; 0 means the initial weights.
    pub best_epoch: usize,
}

impl TrainingReport {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "epoch,train_bce,holdout_bce,holdout_acc")?;
        for e in &self.epochs {
            writeln!(w, "{},{:.8},{:.8},{:.6}", e.epoch, e.train_bce, e.holdout_bce, e.holdout_acc)?;
        }
        Ok(())
    }
}

fn check_two_classes(samples: &[PatchSample]) -> Result<()> {
    let pos = samples.iter().filter(|s| s.label == 1).count();
    if pos == 0 || pos == samples.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Splits off a seeded holdout, trains with Adam on mean BCE and returns the
/// epoch with the lowest holdout BCE.
pub fn train_classifier(samples: &[PatchSample], config: &ClassifierConfig) -> Result<(ClassifierModel, TrainingReport)> {
    check_two_classes(samples)?;
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut stream(config.seed, purpose::CLASSIFIER, u64::MAX));
    let n_hold = ((samples.len() as f64) * config.holdout_fraction).ceil() as usize;
    let n_hold = n_hold.min(samples.len() - 1);
    let holdout: Vec<PatchSample> = idx[..n_hold].iter().map(|&k| samples[k].clone()).collect();
    let train: Vec<PatchSample> = idx[n_hold..].iter().map(|&k| samples[k].clone()).collect();
    let model = ClassifierModel::init(config, crate::rng::mix_seed(config.seed, purpose::INIT))?;
    train_on_split(model, &train, &holdout, config)
}

/// Training loop on an explicit split, starting from `model`.
pub fn train_on_split(
    mut model: ClassifierModel,
    train: &[PatchSample],
    holdout: &[PatchSample],
    config: &ClassifierConfig,
) -> Result<(ClassifierModel, TrainingReport)> {
    if config.batch_size == 0 {
        return Err(invalid("batch_size must be >= 1"));
    }
    if train.is_empty() {
        return Err(invalid("empty training split"));
    }
    if model.patch_size != config.patch_size {
        return Err(invalid("model patch size differs from config"));
    }
    let mut report = TrainingReport::default();
    if config.epochs == 0 {
        return Ok((model, report));
    }
    let mut adam = AdamState::new(&model.params, AdamConfig::with_lr(config.lr));
    let mut best: Option<(f64, ClassifierModel)> = None;
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        if config.shuffle {
            order.shuffle(&mut stream(config.seed, purpose::CLASSIFIER, epoch as u64));
        }
        let mut sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&PatchSample> = chunk.iter().map(|&k| &train[k]).collect();
            let (loss, grads) = model.batch_loss_grad(&batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("classifier loss"));
            }
            adam.step(&mut model.params, &grads)?;
            report.step_losses.push(loss);
            sum += loss * batch.len() as f64;
        }
        let (holdout_bce, holdout_acc) = model.evaluate(holdout)?;
        report.epochs.push(EpochLog {
            epoch,
            train_bce: sum / train.len() as f64,
            holdout_bce,
            holdout_acc,
        });
        let score = if holdout.is_empty() { sum } else { holdout_bce };
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, model.clone()));
            report.best_epoch = epoch;
        }
    }
    Ok((best.expect("at least one epoch").1, report))
}
