use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use boundary_rl::boundary::{render_overlay, segment, Segmentation};
use boundary_rl::classifier::{extract_patches, train_classifier, ClassifierConfig, ClassifierModel, PresenceClassifier};
use boundary_rl::evalkit::{dice, image_ids, is_empty_result, sliding_window_segment, EvalReport};
use boundary_rl::image::{GrayImage, Mask};
use boundary_rl::patch::WorkingImage;
use boundary_rl::pgm;
use boundary_rl::phantom::{generate_phantom, write_phantom, Phantom};
use boundary_rl::ppo::{train, ActMode, PolicyController, PolicyModel};
use boundary_rl::rng::mix_seed;

use crate::config::RunConfig;
use crate::layout::Layout;
use crate::meta::{file_hash, sha256_hex, RunMetadata};

const TRAIN_SPLIT: u64 = 1;
const TEST_SPLIT: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image: String,
    pub mask: String,
    pub sidecar: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
    pub train: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
    /// Every file written, relative to the data directory, with its hash.
    pub files: BTreeMap<String, String>,
}

fn split_seed(seed: u64, split: u64) -> u64 {
    mix_seed(mix_seed(seed, 0x5eed), split)
}

fn write_split(cfg: &RunConfig, dir: &Path, split: &str, n: usize, seed: u64) -> Result<Vec<ManifestEntry>> {
    let sub = dir.join(split);
    fs::create_dir_all(&sub).with_context(|| format!("creating {}", sub.display()))?;
    (0..n)
        .into_par_iter()
        .map(|k| {
            let ph = generate_phantom(&cfg.phantom, mix_seed(seed, k as u64))?;
            let id = format!("img{k:04}");
            let files = write_phantom(&ph, &sub, &id)?;
            Ok(ManifestEntry {
                image: format!("{split}/{}", files[0]),
                mask: format!("{split}/{}", files[1]),
                sidecar: format!("{split}/{}", files[2]),
                id,
            })
        })
        .collect()
}

pub fn gen_data(cfg: &RunConfig, layout: &Layout) -> Result<Manifest> {
    let dir = layout.data();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let data_json = serde_json::to_string(&(&cfg.data, &cfg.phantom))?;
    let train = write_split(cfg, &dir, "train", cfg.data.n_train, split_seed(cfg.seed, TRAIN_SPLIT))?;
    let test = write_split(cfg, &dir, "test", cfg.data.n_test, split_seed(cfg.seed, TEST_SPLIT))?;
    let mut files = BTreeMap::new();
    for e in train.iter().chain(&test) {
        for f in [&e.image, &e.mask, &e.sidecar] {
            files.insert(f.clone(), file_hash(&dir.join(f))?);
        }
    }
    let manifest = Manifest {
        seed: cfg.seed,
        config_hash: sha256_hex(data_json.as_bytes()),
        train,
        test,
        files,
    };
    fs::write(layout.manifest(), serde_json::to_vec_pretty(&manifest)?)?;

    for e in manifest.train.iter().chain(&manifest.test) {
        pgm::load_pgm_sized(dir.join(&e.image), cfg.phantom.height, cfg.phantom.width)?;
    }
    let mut meta = RunMetadata::new("gen-data", cfg.seed, &cfg.canonical_json());
    meta.output(&layout.root, &layout.manifest())?;
    meta.write(&dir.join("run.json"))?;
    Ok(manifest)
}

pub fn load_manifest(layout: &Layout) -> Result<Manifest> {
    let path = layout.manifest();
    if !path.exists() {
        bail!("no dataset at {}: run gen-data first", path.display());
    }
    Ok(serde_json::from_slice(&fs::read(&path)?)?)
}

fn load_split(layout: &Layout, entries: &[ManifestEntry]) -> Result<Vec<Phantom>> {
    let dir = layout.data();
    entries
        .iter()
        .map(|e| {
            Phantom::from_files(&dir.join(&e.image), &dir.join(&e.sidecar))
                .with_context(|| format!("loading phantom {}", e.id))
        })
        .collect()
}

fn require_classifier(layout: &Layout) -> Result<ClassifierModel> {
    let path = layout.classifier_ckpt();
    if !path.exists() {
        bail!("classifier checkpoint {} not found: train classifier first", path.display());
    }
    Ok(ClassifierModel::load(&path)?)
}

fn require_policy(layout: &Layout) -> Result<PolicyModel> {
    let path = layout.policy_ckpt();
    if !path.exists() {
        bail!("policy checkpoint {} not found: run train-rl first", path.display());
    }
    Ok(PolicyModel::load(&path)?)
}

pub fn train_classifier_cmd(cfg: &RunConfig, layout: &Layout) -> Result<()> {
    let manifest = load_manifest(layout)?;
    let train_set = load_split(layout, &manifest.train)?;
    if train_set.is_empty() {
        bail!("training split is empty");
    }
    let ccfg = ClassifierConfig {
        seed: mix_seed(cfg.seed, cfg.classifier.seed),
        ..cfg.classifier.clone()
    };
    let samples = extract_patches(
        &train_set,
        ccfg.n_patches,
        ccfg.patch_size,
        ccfg.balance,
        ccfg.overlap_threshold,
        ccfg.seed,
    )?;
    let (model, report) = train_classifier(&samples, &ccfg)?;
    let dir = layout.classifier_dir();
    fs::create_dir_all(&dir)?;
    let ckpt = layout.classifier_ckpt();
    model.save(&ckpt, Some(ccfg.seed))?;
    if ClassifierModel::load(&ckpt)? != model {
        bail!("classifier checkpoint failed to round-trip");
    }
    let log = dir.join("training_log.csv");
    report.write_csv(fs::File::create(&log)?)?;
    if let Some(best) = report.epochs.iter().find(|e| e.epoch == report.best_epoch) {
        eprintln!(
            "classifier: best epoch {} holdout bce {:.4} acc {:.4}",
            best.epoch, best.holdout_bce, best.holdout_acc
        );
    }
    let mut meta = RunMetadata::new("train-classifier", cfg.seed, &cfg.canonical_json());
    meta.input(&layout.root, &layout.manifest())?;
    meta.output(&layout.root, &ckpt)?;
    meta.output(&layout.root, &log)?;
    meta.write(&dir.join("run.json"))
}

pub fn train_rl_cmd(cfg: &RunConfig, layout: &Layout) -> Result<()> {
    let classifier = require_classifier(layout)?;
    let manifest = load_manifest(layout)?;
    let train_set = load_split(layout, &manifest.train)?;
    let dir = layout.rl_dir();
    let ckpt_dir = layout.rl_checkpoints();
    fs::create_dir_all(&ckpt_dir)?;
    let clf: &dyn PresenceClassifier = &classifier;
    let seed = mix_seed(cfg.seed, 0x71);
    let every = cfg.ppo.checkpoint_every;
    let mut saved = Vec::new();
    let (model, report) = train(&train_set, &|_| clf, &cfg.env, &cfg.ppo, seed, &mut |m, log| {
        eprintln!(
            "update {:4}  episodes {:4}  termination {:.3}  return {:8.2}  entropy {:.3}",
            log.update, log.episodes, log.termination_rate, log.mean_return, log.entropy
        );
        if every > 0 && log.update % every == 0 {
            let p = ckpt_dir.join(format!("policy_u{:04}.ckpt", log.update));
            m.save(&p, Some(seed))?;
            saved.push(p);
        }
        Ok(())
    })?;
    let ckpt = layout.policy_ckpt();
    model.save(&ckpt, Some(seed))?;
    if PolicyModel::load(&ckpt)? != model {
        bail!("policy checkpoint failed to round-trip");
    }
    let log = dir.join("training_log.csv");
    report.write_csv(fs::File::create(&log)?)?;
    eprintln!(
        "train-rl: {} updates, converged {}, {} terminations, {} noise-mask failures",
        report.log.len(),
        report.converged,
        report.terminations,
        report.noise_failures
    );
    let mut meta = RunMetadata::new("train-rl", cfg.seed, &cfg.canonical_json());
    meta.input(&layout.root, &layout.manifest())?;
    meta.input(&layout.root, &layout.classifier_ckpt())?;
    meta.output(&layout.root, &ckpt)?;
    meta.output(&layout.root, &log)?;
    for p in &saved {
        meta.output(&layout.root, p)?;
    }
    meta.write(&dir.join("run.json"))
}

fn run_segmentation(
    cfg: &RunConfig,
    policy: &PolicyModel,
    classifier: &ClassifierModel,
    image: &GrayImage,
    seed: u64,
) -> boundary_rl::Result<Segmentation> {
    let mut ctl = PolicyController {
        model: policy,
        mode: ActMode::Sample,
        record: false,
    };
    segment(image, &mut ctl, classifier, &cfg.env, &cfg.boundary, seed)
}

pub fn segment_cmd(cfg: &RunConfig, layout: &Layout, image_path: &Path, name: Option<String>) -> Result<PathBuf> {
    if !image_path.exists() {
        bail!("input image {} does not exist", image_path.display());
    }
    let classifier = require_classifier(layout)?;
    let policy = require_policy(layout)?;
    let image = pgm::load_pgm(image_path)?;
    let name = name.unwrap_or_else(|| {
        image_path
            .file_stem()
            .map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned())
    });
    let seg = run_segmentation(cfg, &policy, &classifier, &image, cfg.seed)?;
    let dir = layout.segment_dir(&name);
    fs::create_dir_all(&dir)?;
    let mask_path = dir.join("mask.pgm");
    let overlay_path = dir.join("overlay.ppm");
    let json_path = dir.join("boundary.json");
    pgm::save_mask_pgm(&seg.mask, &mask_path)?;
    fs::write(&overlay_path, render_overlay(&image, &seg))?;
    fs::write(&json_path, seg.to_json()?)?;
    pgm::load_pgm_sized(&mask_path, image.height(), image.width())?;
    eprintln!(
        "segment: {} raw points, {} kept, mask area {}",
        seg.points.raw.len(),
        seg.points.kept.len(),
        seg.mask.area()
    );
    let mut meta = RunMetadata::new("segment", cfg.seed, &cfg.canonical_json());
    meta.inputs.insert(image_path.display().to_string(), file_hash(image_path)?);
    meta.input(&layout.root, &layout.classifier_ckpt())?;
    meta.input(&layout.root, &layout.policy_ckpt())?;
    for p in [&mask_path, &overlay_path, &json_path] {
        meta.output(&layout.root, p)?;
    }
    meta.write(&dir.join("run.json"))?;
    Ok(dir)
}

#[derive(Serialize)]
struct ReportJson<'a> {
    report: &'a EvalReport,
}

pub fn evaluate_cmd(cfg: &RunConfig, layout: &Layout) -> Result<EvalReport> {
    let classifier = require_classifier(layout)?;
    let policy = require_policy(layout)?;
    let manifest = load_manifest(layout)?;
    let test_set = load_split(layout, &manifest.test)?;
    if test_set.is_empty() {
        bail!("test split is empty");
    }
    let ids: Vec<String> = manifest.test.iter().map(|e| e.id.clone()).collect();
    let dir = layout.eval_dir();

    type Scored = (f64, bool, Mask);
    let score = |method: &str, f: &(dyn Fn(usize, &Phantom) -> boundary_rl::Result<Mask> + Sync)| -> Result<(String, Vec<f64>, usize, f64)> {
        let start = std::time::Instant::now();
        let results: Vec<Scored> = test_set
            .par_iter()
            .enumerate()
            .map(|(k, ph)| -> Result<Scored> {
                let (mask, failed) = match f(k, ph) {
                    Ok(m) => (m, false),
                    Err(e) if is_empty_result(&e) => (Mask::new(ph.height(), ph.width()), true),
                    Err(e) => return Err(e.into()),
                };
                Ok((dice(&mask, &ph.mask)?, failed, mask))
            })
            .collect::<Result<_>>()?;
        let mask_dir = dir.join("masks").join(method);
        fs::create_dir_all(&mask_dir)?;
        for (id, (_, _, m)) in ids.iter().zip(&results) {
            pgm::save_mask_pgm(m, mask_dir.join(format!("{id}.pgm")))?;
        }
        let failures = results.iter().filter(|r| r.1).count();
        Ok((
            method.to_string(),
            results.into_iter().map(|r| r.0).collect(),
            failures,
            start.elapsed().as_secs_f64(),
        ))
    };

    let rl = |k: usize, ph: &Phantom| {
        run_segmentation(cfg, &policy, &classifier, &ph.image, mix_seed(cfg.seed, k as u64)).map(|s| s.mask)
    };
    let mut scores = vec![score("boundary_rl", &rl)?];
    if cfg.eval.include_sliding_window {
        let stride = cfg.eval.sliding_window_stride;
        let sw = |_: usize, ph: &Phantom| sliding_window_segment(&WorkingImage::new(ph.image.clone()), &classifier, stride);
        scores.push(score("sliding_window", &sw)?);
    }
    let report = EvalReport::from_scores(if ids.is_empty() { image_ids(test_set.len()) } else { ids }, scores)?;

    let paths = [dir.join("dice.csv"), dir.join("summary.csv"), dir.join("tests.csv")];
    report.write_dice_csv(fs::File::create(&paths[0])?)?;
    report.write_summary_csv(fs::File::create(&paths[1])?)?;
    report.write_tests_csv(fs::File::create(&paths[2])?)?;
    let report_path = dir.join("report.json");
    fs::write(&report_path, serde_json::to_vec_pretty(&ReportJson { report: &report })?)?;
    for m in &report.methods {
        eprintln!(
            "{:16} Dice {:.3} ± {:.3}  failures {}",
            m.method, m.mean, m.std, m.failures
        );
    }
    for t in &report.tests {
        eprintln!("{} vs {}: t = {:.3}, p = {:.4}", t.method_a, t.method_b, t.t, t.p);
    }
    let mut meta = RunMetadata::new("evaluate", cfg.seed, &cfg.canonical_json());
    meta.input(&layout.root, &layout.manifest())?;
    meta.input(&layout.root, &layout.classifier_ckpt())?;
    meta.input(&layout.root, &layout.policy_ckpt())?;
    for p in &paths {
        meta.output(&layout.root, p)?;
    }
    meta.write(&dir.join("run.json"))?;
    Ok(report)
}
