//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on failure.

use std::f64::consts::TAU;
use std::time::Instant;

use rand::Rng as _;

use boundary_rl::boundary::{rasterize, segment, InferenceConfig, Point, Polygon};
use boundary_rl::classifier::{
    extract_patches, train_classifier, ClassifierConfig, ClassifierModel, ConstantClassifier, OverlapOracle, PatchSample,
    PresenceClassifier,
};
use boundary_rl::env::{
    movement_reward, run_episode, step_reward, Action, CentroidSource, EnvConfig,
    GreedyOracle, ImageSession, Trajectory, Transition,
};
use boundary_rl::evalkit::{dice, evaluate, sliding_window_segment, FnSegmenter, Segmenter};
use boundary_rl::image::{GrayImage, Mask};
use boundary_rl::nn::{
    finite_difference_gradient, max_relative_error, Activation, Architecture, LayerSpec, ParamSet, Tensor,
};
use boundary_rl::patch::{Center, WorkingImage};
use boundary_rl::phantom::{generate_dataset, Phantom, PhantomConfig};
use boundary_rl::ppo::{
    compute_returns_advantages, ppo_loss, train, ActMode, Batch, ConvSpec, PPOConfig, PolicyController, PolicyModel,
    PolicyNetConfig,
};
use boundary_rl::rng::rng_from_seed;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn report(n: usize, name: &str, start: Instant, outcome: Outcome) -> bool {
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail, pass) = match outcome {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!("criterion {n} [{tag}] {name}: {detail} ({secs:.1}s)");
    pass
}

fn reward_algebra() -> Outcome {
    let mut seen: Vec<f64> = Vec::new();
    for r_mov in [-1.0, 1.0] {
        for r_term in [0u8, 1] {
            seen.push(step_reward(r_mov, r_term));
        }
    }
    seen.sort_by(f64::total_cmp);
    let expected = vec![-1.0, 1.0, 99.0, 101.0];

    let equal = movement_reward(Center::new(3, 4), Center::new(4, 3), (0.0, 0.0));

    // Same four values through the environment itself.
    let img = GrayImage::filled(32, 32, 0.3);
    let env = EnvConfig {
        patch_size: 8,
        ..EnvConfig::default()
    };
    let session = ImageSession::with_centroid(img, (16.0, 16.0), &env).map_err(|e| e.to_string())?;
    let mut via_env = Vec::new();
    for prob in [0.0, 1.0] {
        let clf = ConstantClassifier { patch_size: 8, prob };
        let st = session.reset_at(Center::new(4, 10)).map_err(|e| e.to_string())?;
        for a in [Action::Down, Action::Left] {
            let out = session.step(&st, a, &clf).map_err(|e| e.to_string())?;
            via_env.push(out.reward);
        }
    }
    via_env.sort_by(f64::total_cmp);
    check(
        seen == expected && via_env == expected && equal == 1.0,
        format!("formula {seen:?}, env {via_env:?}, equal-distance r_mov {equal}"),
    )
}

fn gradient_check() -> Outcome {
    let arch = Architecture {
        input: [1, 8, 8],
        layers: vec![
            LayerSpec::Conv {
                out_channels: 3,
                kernel: 3,
                stride: 2,
                activation: Activation::Relu,
            },
            LayerSpec::Dense {
                outputs: 4,
                activation: Activation::Relu,
            },
            LayerSpec::Dense {
                outputs: 1,
                activation: Activation::Sigmoid,
            },
        ],
    };
    let clf = ClassifierModel {
        params: ParamSet::init(arch, 11).map_err(|e| e.to_string())?,
        patch_size: 8,
        decision_threshold: 0.9,
    };
    let mut rng = rng_from_seed(4);
    let samples: Vec<PatchSample> = (0..6)
        .map(|k| PatchSample {
            patch: GrayImage::from_fn(8, 8, |_, _| rng.random_range(0.0..1.0)),
            label: (k % 2) as u8,
            source: 0,
            center: Center::new(4, 4),
        })
        .collect();
    let refs: Vec<&PatchSample> = samples.iter().collect();
    let (_, grads) = clf.batch_loss_grad(&refs).map_err(|e| e.to_string())?;
    let numeric = finite_difference_gradient(&clf.params, 1e-4, |p| {
        let m = ClassifierModel {
            params: p.clone(),
            ..clf.clone()
        };
        m.batch_loss_grad(&refs).expect("loss").0
    });
    let clf_params = clf.params.num_params();
    let clf_err = max_relative_error(&grads.flat(), &numeric, 1e-3);

    let net = PolicyNetConfig {
        feature_size: 6,
        conv: vec![ConvSpec {
            channels: 2,
            kernel: 3,
            stride: 1,
        }],
        hidden: 8,
        value_scale: 10.0,
    };
    let policy = PolicyModel::init(&net, 2, 9).map_err(|e| e.to_string())?;
    let mut batch = Batch::default();
    for _ in 0..8 {
        let f = Tensor::new(vec![3, 6, 6], (0..108).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let out = policy.evaluate(&f).map_err(|e| e.to_string())?;
        let a = rng.random_range(0..4);
        batch.old_log_probs.push(out.log_probs[a] + rng.random_range(-0.15..0.15));
        batch.actions.push(a);
        batch.features.push(f);
        batch.returns.push(rng.random_range(-30.0..110.0));
        batch.advantages.push(rng.random_range(-2.0..2.0));
    }
    let idx: Vec<usize> = (0..8).collect();
    let cfg = PPOConfig::default();
    let (_, pgrads) = ppo_loss(&policy, &batch, &idx, &cfg).map_err(|e| e.to_string())?;
    let pnum = finite_difference_gradient(&policy.params, 1e-4, |p| {
        let m = PolicyModel {
            params: p.clone(),
            ..policy.clone()
        };
        ppo_loss(&m, &batch, &idx, &cfg).expect("loss").0.loss
    });
    let ppo_params = policy.params.num_params();
    let ppo_err = max_relative_error(&pgrads.flat(), &pnum, 1e-3);
    check(
        clf_params <= 500 && ppo_params <= 500 && clf_err <= 1e-4 && ppo_err <= 1e-4,
        format!("classifier {clf_params} params err {clf_err:.2e}; ppo {ppo_params} params err {ppo_err:.2e}"),
    )
}

fn synthetic_trajectory(rng: &mut impl rand::Rng) -> Trajectory {
    let n = rng.random_range(1..=50);
    let terminated = rng.random_bool(0.5);
    let steps = (0..n)
        .map(|t| {
            let r_mov = if rng.random_bool(0.7) { 1.0 } else { -1.0 };
            let r_term = u8::from(terminated && t == n - 1);
            Transition {
                t,
                from: Center::new(0, 0),
                to: Center::new(0, 0),
                action: Action::ALL[rng.random_range(0..4)],
                log_prob: -1.0,
                value: rng.random_range(-50.0..150.0),
                reward: step_reward(r_mov, r_term),
                r_mov,
                r_term,
                features: None,
            }
        })
        .collect();
    Trajectory {
        steps,
        terminated,
        truncated: !terminated,
        bootstrap_value: if terminated { 0.0 } else { rng.random_range(-50.0..150.0) },
        noise: None,
    }
}

fn return_oracle() -> Outcome {
    let mut rng = rng_from_seed(31);
    let mut worst_ret: f64 = 0.0;
    let mut worst_adv: f64 = 0.0;
    for _ in 0..200 {
        let tr = synthetic_trajectory(&mut rng);
        let gamma = [0.0, 0.5, 0.9, 0.99, 1.0][rng.random_range(0..5)];
        let lambda = rng.random_range(0.0..=1.0);
        let (ret, adv) = compute_returns_advantages(&tr, gamma, lambda).map_err(|e| e.to_string())?;
        let n = tr.len();
        let tail = if tr.terminated { 0.0 } else { tr.bootstrap_value };
        let r: Vec<f64> = tr.steps.iter().map(|s| s.reward).collect();
        let v: Vec<f64> = tr.steps.iter().map(|s| s.value).collect();
        for t in 0..n {
            let mut g = 0.0;
            for k in t..n {
                g += gamma.powi((k - t) as i32) * r[k];
            }
            g += gamma.powi((n - t) as i32) * tail;
            worst_ret = worst_ret.max((g - ret[t]).abs());

            let mut a = 0.0;
            for k in t..n {
                let next = if k + 1 < n { v[k + 1] } else { tail };
                let delta = r[k] + gamma * next - v[k];
                a += (gamma * lambda).powi((k - t) as i32) * delta;
            }
            worst_adv = worst_adv.max((a - adv[t]).abs());
        }
    }
    check(
        worst_ret <= 1e-10 && worst_adv <= 1e-10,
        format!("max |return error| {worst_ret:.1e}, max |GAE error| {worst_adv:.1e} over 200 trajectories"),
    )
}

/// Crossing-number test written independently of the library rasterizer.
fn brute_inside(v: &[Point], y: f64, x: f64) -> bool {
    let mut inside = false;
    let n = v.len();
    for k in 0..n {
        let (ay, ax) = v[k];
        let (by, bx) = v[(k + 1) % n];
        if (ay > y) != (by > y) {
            let cross = ax + (y - ay) / (by - ay) * (bx - ax);
            if x < cross {
                inside = !inside;
            }
        }
    }
    inside
}

fn geometry_oracle() -> Outcome {
    let mut rng = rng_from_seed(77);
    let (h, w) = (48, 56);
    let mut mismatches = 0usize;
    let mut pixels = 0usize;
    for _ in 0..50 {
        let n = rng.random_range(3..24);
        let (ci, cj) = (rng.random_range(-5.0..53.0), rng.random_range(-5.0..61.0));
        let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let verts: Vec<Point> = angles
            .iter()
            .map(|&a| {
                let r = rng.random_range(2.0..30.0);
                (ci + r * a.sin(), cj + r * a.cos())
            })
            .collect();
        let poly = Polygon::new(verts.clone()).map_err(|e| e.to_string())?;
        let mask = rasterize(&poly, h, w);
        for i in 0..h {
            for j in 0..w {
                pixels += 1;
                if mask.get(i, j) != brute_inside(&verts, i as f64 + 0.5, j as f64 + 0.5) {
                    mismatches += 1;
                }
            }
        }
    }

    let a = Mask::from_fn(20, 20, |i, j| i < 10 && j < 10);
    let b = Mask::from_fn(20, 20, |i, j| i < 10 && (5..15).contains(&j));
    let c = Mask::from_fn(20, 20, |i, j| (2..5).contains(&i) && (3..9).contains(&j));
    let inter_ac = 18.0;
    let cases = [
        (dice(&a, &b).unwrap(), 2.0 * 50.0 / 200.0),
        (dice(&a, &c).unwrap(), 2.0 * inter_ac / (100.0 + 18.0)),
        (dice(&a, &a).unwrap(), 1.0),
        (dice(&b, &c).unwrap(), 2.0 * 12.0 / (100.0 + 18.0)),
    ];
    let dice_ok = cases.iter().all(|(got, want)| got == want);
    check(
        mismatches == 0 && dice_ok,
        format!("{mismatches} of {pixels} pixels disagree on 50 polygons; dice cases exact: {dice_ok}"),
    )
}

fn overlap_oracle(ph: &Phantom, patch: usize) -> OverlapOracle {
    OverlapOracle {
        mask: ph.mask.clone(),
        patch_size: patch,
        threshold: ClassifierConfig::default().overlap_threshold,
    }
}

fn pipeline_validation() -> Outcome {
    let phantoms = generate_dataset(20, &PhantomConfig::default(), 500).map_err(|e| e.to_string())?;
    let env = EnvConfig {
        centroid: CentroidSource::GroundTruth,
        ..EnvConfig::default()
    };
    let cfg = InferenceConfig {
        episodes: 64,
        ..InferenceConfig::default()
    };
    let mut scores = Vec::new();
    for (k, ph) in phantoms.iter().enumerate() {
        let clf = overlap_oracle(ph, env.patch_size);
        let mut ctl = GreedyOracle { target: ph.centroid };
        let d = match segment(&ph.image, &mut ctl, &clf, &env, &cfg, k as u64) {
            Ok(seg) => dice(&seg.mask, &ph.mask).map_err(|e| e.to_string())?,
            Err(_) => 0.0,
        };
        scores.push(d);
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let min = scores.iter().copied().fold(1.0, f64::min);
    check(mean >= 0.90, format!("mean Dice {mean:.3} (min {min:.3}) on 20 phantoms, M = 64"))
}

fn tiny_mdp() -> Outcome {
    const N: usize = 12;
    const P: usize = 4;
    let verts: Vec<Point> = (0..16)
        .map(|k| {
            let a = k as f64 / 16.0 * TAU;
            (6.3 + 1.6 * a.sin(), 5.7 + 1.6 * a.cos())
        })
        .collect();
    let poly = Polygon::new(verts).map_err(|e| e.to_string())?;
    let mask = rasterize(&poly, N, N);
    let image = GrayImage::from_fn(N, N, |i, j| if mask.get(i, j) { 0.8 } else { 0.2 });
    let ph = Phantom::from_polygon(image, poly).map_err(|e| e.to_string())?;
    let oracle = overlap_oracle(&ph, P);
    let env = EnvConfig {
        patch_size: P,
        step_size: 1,
        max_steps: 40,
        centroid: CentroidSource::GroundTruth,
        noise_redraws: 3,
    };
    let cfg = PPOConfig {
        batch_size: 512,
        minibatch_size: 64,
        max_updates: 100,
        min_updates: 100,
        episodes_per_image: 1,
        net: PolicyNetConfig {
            feature_size: N,
            conv: vec![
                ConvSpec {
                    channels: 8,
                    kernel: 3,
                    stride: 1,
                },
                ConvSpec {
                    channels: 8,
                    kernel: 3,
                    stride: 2,
                },
                ConvSpec {
                    channels: 8,
                    kernel: 3,
                    stride: 1,
                },
            ],
            hidden: 32,
            value_scale: 100.0,
        },
        ..PPOConfig::default()
    };
    let gamma = cfg.gamma;
    let session = ImageSession::new(&ph, &env).map_err(|e| e.to_string())?;

    // Tabular value iteration over patch centers.
    let (lo, hi) = (P / 2, N - P / 2);
    let side = hi - lo + 1;
    let idx = |c: Center| (c.i - lo) * side + (c.j - lo);
    let centers: Vec<Center> = (lo..=hi).flat_map(|i| (lo..=hi).map(move |j| Center::new(i, j))).collect();
    let mut table = Vec::new();
    for &c in &centers {
        let st = session.reset_at(c).map_err(|e| e.to_string())?;
        let row: Vec<(f64, bool, usize)> = Action::ALL
            .iter()
            .map(|&a| {
                let o = session.step(&st, a, &oracle).expect("step");
                (o.reward, o.next_state.terminated, idx(o.next_state.c))
            })
            .collect();
        table.push(row);
    }
    let q = |v: &[f64], s: usize, a: usize| {
        let (r, done, next) = table[s][a];
        r + if done { 0.0 } else { gamma * v[next] }
    };
    let mut v = vec![0.0; centers.len()];
    loop {
        let nv: Vec<f64> = (0..centers.len())
            .map(|s| (0..4).map(|a| q(&v, s, a)).fold(f64::MIN, f64::max))
            .collect();
        let delta = nv.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = nv;
        if delta < 1e-10 {
            break;
        }
    }

    // States reachable from edge starts without passing a terminal.
    let mut reach = vec![false; centers.len()];
    let mut stack: Vec<usize> = centers
        .iter()
        .filter(|c| c.i == lo || c.i == hi || c.j == lo || c.j == hi)
        .map(|&c| idx(c))
        .collect();
    while let Some(s) = stack.pop() {
        if std::mem::replace(&mut reach[s], true) {
            continue;
        }
        for &(_, done, next) in &table[s] {
            if !done && !reach[next] {
                stack.push(next);
            }
        }
    }

    let dataset = vec![ph.clone()];
    let clf: &dyn PresenceClassifier = &oracle;
    let (model, _) = train(&dataset, &|_| clf, &env, &cfg, 5, &mut |_, _| Ok(())).map_err(|e| e.to_string())?;

    let fresh = WorkingImage::new(ph.image.clone());
    let (mut optimal, mut total) = (0, 0);
    for (s, &c) in centers.iter().enumerate() {
        if !reach[s] {
            continue;
        }
        total += 1;
        let st = session.reset_at(c).map_err(|e| e.to_string())?;
        let a = model
            .evaluate(&model.features(&fresh, &st))
            .map_err(|e| e.to_string())?
            .greedy()
            .index();
        let best = (0..4).map(|b| q(&v, s, b)).fold(f64::MIN, f64::max);
        if q(&v, s, a) >= best - 1e-9 {
            optimal += 1;
        }
    }
    let frac = optimal as f64 / total as f64;
    check(frac >= 0.9, format!("greedy action optimal in {optimal}/{total} reachable states ({frac:.3})"))
}

struct EndToEnd {
    held_out: Vec<Phantom>,
    train_set: Vec<Phantom>,
    classifier: ClassifierModel,
    holdout_acc: f64,
    policy: PolicyModel,
    env: EnvConfig,
    inference: InferenceConfig,
    training_terminations: usize,
    training_noise_failures: usize,
}

fn setup_end_to_end() -> Result<EndToEnd, String> {
    let err = |e: boundary_rl::Error| e.to_string();
    let pc = PhantomConfig::default();
    let train_set = generate_dataset(64, &pc, 1001).map_err(err)?;
    let held_out = generate_dataset(20, &pc, 2002).map_err(err)?;
    let ccfg = ClassifierConfig {
        seed: 3,
        ..ClassifierConfig::default()
    };
    let samples = extract_patches(
        &train_set,
        ccfg.n_patches,
        ccfg.patch_size,
        ccfg.balance,
        ccfg.overlap_threshold,
        ccfg.seed,
    )
    .map_err(err)?;
    let (classifier, log) = train_classifier(&samples, &ccfg).map_err(err)?;
    let holdout_acc = log
        .epochs
        .iter()
        .find(|e| e.epoch == log.best_epoch)
        .map_or(0.0, |e| e.holdout_acc);

    let env = EnvConfig {
        max_steps: 400,
        ..EnvConfig::default()
    };
    let pcfg = PPOConfig {
        episodes_per_image: 24,
        max_updates: 20,
        min_updates: 10,
        ..PPOConfig::default()
    };
    let clf: &dyn PresenceClassifier = &classifier;
    let (policy, rep) = train(&train_set, &|_| clf, &env, &pcfg, 17, &mut |_, _| Ok(())).map_err(err)?;
    Ok(EndToEnd {
        held_out,
        train_set,
        holdout_acc,
        policy,
        env,
        inference: InferenceConfig {
            episodes: 24,
            ..InferenceConfig::default()
        },
        training_terminations: rep.terminations,
        training_noise_failures: rep.noise_failures,
        classifier,
    })
}

fn end_to_end(e: &EndToEnd) -> Outcome {
    let mut scores = Vec::new();
    let (mut terminated, mut episodes) = (0, 0);
    for (k, ph) in e.held_out.iter().enumerate() {
        let mut ctl = PolicyController {
            model: &e.policy,
            mode: ActMode::Sample,
            record: false,
        };
        let centre = (ph.height() as f64 / 2.0, ph.width() as f64 / 2.0);
        let mut session = ImageSession::with_centroid(ph.image.clone(), centre, &e.env).map_err(|e| e.to_string())?;
        let starts = boundary_rl::boundary::start_schedule(e.inference.episodes, ph.height(), ph.width(), 24);
        for (m, s) in starts.into_iter().enumerate() {
            let tr = run_episode(&mut session, &mut ctl, &e.classifier, Some(s), m as u64, k as u64)
                .map_err(|e| e.to_string())?;
            terminated += usize::from(tr.terminated);
            episodes += 1;
        }
        let d = match segment(&ph.image, &mut ctl, &e.classifier, &e.env, &e.inference, k as u64) {
            Ok(seg) => dice(&seg.mask, &ph.mask).map_err(|e| e.to_string())?,
            Err(_) => 0.0,
        };
        scores.push(d);
    }
    let rate = terminated as f64 / episodes as f64;
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let sw: Vec<f64> = e
        .held_out
        .iter()
        .map(|ph| {
            let m = sliding_window_segment(&WorkingImage::new(ph.image.clone()), &e.classifier, 4).expect("sw");
            dice(&m, &ph.mask).expect("dice")
        })
        .collect();
    let sw_mean = sw.iter().sum::<f64>() / sw.len() as f64;
    check(
        e.holdout_acc >= 0.95 && rate >= 0.85 && mean >= 0.75 && mean >= sw_mean,
        format!(
            "classifier holdout acc {:.3}; held-out termination {rate:.3}; Dice {mean:.3} vs sliding window {sw_mean:.3}",
            e.holdout_acc
        ),
    )
}

fn baseline_harness(e: &EndToEnd) -> Outcome {
    let run = || -> Result<[String; 3], String> {
        let rl = |k: usize, ph: &Phantom| {
            let mut ctl = PolicyController {
                model: &e.policy,
                mode: ActMode::Sample,
                record: false,
            };
            segment(&ph.image, &mut ctl, &e.classifier, &e.env, &e.inference, k as u64).map(|s| s.mask)
        };
        let sw = |_: usize, ph: &Phantom| sliding_window_segment(&WorkingImage::new(ph.image.clone()), &e.classifier, 4);
        let mut methods: Vec<Box<dyn Segmenter + '_>> = vec![
            Box::new(FnSegmenter {
                name: "boundary_rl".into(),
                f: rl,
            }),
            Box::new(FnSegmenter {
                name: "sliding_window".into(),
                f: sw,
            }),
        ];
        let rep = evaluate(&e.held_out, &mut methods).map_err(|e| e.to_string())?;
        rep.to_csv_strings().map_err(|e| e.to_string())
    };
    let a = run()?;
    let b = run()?;
    let tests = a[2].lines().nth(1).unwrap_or("").to_string();
    check(
        a == b && a[2].lines().count() == 2 && a[0].lines().count() == 41,
        format!("identical CSV bytes across runs: {}; test row `{tests}`", a == b),
    )
}

fn noise_contract(e: &EndToEnd) -> Outcome {
    let mut episodes = 0usize;
    let mut violations = 0usize;
    let images = e.train_set.iter().chain(&e.held_out);
    for (k, ph) in images.enumerate() {
        let mut ctl = PolicyController {
            model: &e.policy,
            mode: ActMode::Sample,
            record: false,
        };
        let mut session = ImageSession::new(ph, &e.env).map_err(|e| e.to_string())?;
        for m in 0..24u64 {
            let tr = run_episode(&mut session, &mut ctl, &e.classifier, None, m, 9000 + k as u64)
                .map_err(|e| e.to_string())?;
            if tr.terminated {
                episodes += 1;
                let c = tr.final_center().expect("step");
                if e.classifier.detects(&session.image, c) {
                    violations += 1;
                }
            }
        }
    }
    let total = episodes + e.training_terminations;
    check(
        episodes >= 1000 && violations == 0 && e.training_noise_failures == 0,
        format!(
            "{violations} violations re-checked over {episodes} episodes; \
             {} failures logged over {} training terminations ({total} total)",
            e.training_noise_failures, e.training_terminations
        ),
    )
}

fn main() {
    let mut all = true;
    let t = Instant::now();
    all &= report(1, "reward algebra", t, reward_algebra());
    let t = Instant::now();
    all &= report(2, "gradient correctness", t, gradient_check());
    let t = Instant::now();
    all &= report(3, "return oracle", t, return_oracle());
    let t = Instant::now();
    all &= report(4, "geometry oracle", t, geometry_oracle());
    let t = Instant::now();
    all &= report(5, "pipeline validation", t, pipeline_validation());
    let t = Instant::now();
    all &= report(6, "tiny-MDP optimality", t, tiny_mdp());

    let t = Instant::now();
    match setup_end_to_end() {
        Ok(e) => {
            println!("end-to-end training finished in {:.1}s", t.elapsed().as_secs_f64());
            let t = Instant::now();
            all &= report(7, "end-to-end learning", t, end_to_end(&e));
            let t = Instant::now();
            all &= report(8, "baseline parity harness", t, baseline_harness(&e));
            let t = Instant::now();
            all &= report(9, "noise-masking contract", t, noise_contract(&e));
        }
        Err(msg) => {
            for (n, name) in [(7, "end-to-end learning"), (8, "baseline parity harness"), (9, "noise-masking contract")] {
                all &= report(n, name, t, Err(format!("setup failed: {msg}")));
            }
        }
    }
    if !all {
        std::process::exit(1);
    }
}
