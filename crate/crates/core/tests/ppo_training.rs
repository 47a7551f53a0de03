use boundary_rl::classifier::{OverlapOracle, PresenceClassifier};
use boundary_rl::env::{CentroidSource, EnvConfig};
use boundary_rl::phantom::{generate_dataset, PhantomConfig};
use boundary_rl::ppo::{train, PPOConfig, PolicyModel};
use boundary_rl::rng::{mix_seed, purpose};

fn small_setup() -> (Vec<boundary_rl::Phantom>, Vec<OverlapOracle>, EnvConfig) {
    let pc = PhantomConfig {
        height: 64,
        width: 64,
        patch_size: 16,
        radius_mean: 20.0,
        ..PhantomConfig::default()
    };
    let ds = generate_dataset(8, &pc, 42).unwrap();
    let oracles = ds
        .iter()
        .map(|p| OverlapOracle {
            mask: p.mask.clone(),
            patch_size: 16,
            threshold: 0.075,
        })
        .collect();
    let env = EnvConfig {
        patch_size: 16,
        max_steps: 200,
        centroid: CentroidSource::GroundTruth,
        ..EnvConfig::default()
    };
    (ds, oracles, env)
}

fn cfg(updates: usize) -> PPOConfig {
    PPOConfig {
        batch_size: 1024,
        minibatch_size: 256,
        episodes_per_image: 8,
        max_updates: updates,
        min_updates: updates,
        net: boundary_rl::ppo::PolicyNetConfig {
            feature_size: 16,
            conv: vec![
                boundary_rl::ppo::ConvSpec {
                    channels: 8,
                    kernel: 4,
                    stride: 2,
                },
                boundary_rl::ppo::ConvSpec {
                    channels: 8,
                    kernel: 3,
                    stride: 1,
                },
                boundary_rl::ppo::ConvSpec {
                    channels: 8,
                    kernel: 3,
                    stride: 1,
                },
            ],
            hidden: 32,
            value_scale: 100.0,
        },
        ..PPOConfig::default()
    }
}

#[test]
fn oracle_rewards_reach_high_termination() {
    let (ds, oracles, env) = small_setup();
    let f = |k: usize| -> &dyn PresenceClassifier { &oracles[k] };
    let (_, rep) = train(&ds, &f, &env, &cfg(20), 1, &mut |_, _| Ok(())).unwrap();
    assert_eq!(rep.log.len(), 20);
    let late: f64 = rep.log[15..].iter().map(|l| l.termination_rate).sum::<f64>() / 5.0;
    let early: f64 = rep.log[..5].iter().map(|l| l.termination_rate).sum::<f64>() / 5.0;
    assert!(late > 0.9, "late termination {late}");
    assert!(late >= early - 0.05, "early {early} late {late}");
    assert_eq!(rep.noise_failures, 0);
}

#[test]
fn zero_updates_returns_initial_policy() {
    let (ds, oracles, env) = small_setup();
    let f = |k: usize| -> &dyn PresenceClassifier { &oracles[k] };
    let c = cfg(0);
    let (model, rep) = train(&ds, &f, &env, &c, 9, &mut |_, _| Ok(())).unwrap();
    assert!(rep.log.is_empty());
    assert_eq!(model, PolicyModel::init(&c.net, 16, mix_seed(9, purpose::INIT)).unwrap());
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let (ds, oracles, env) = small_setup();
    let f = |k: usize| -> &dyn PresenceClassifier { &oracles[k] };
    let run = || train(&ds, &f, &env, &cfg(2), 3, &mut |_, _| Ok(())).unwrap().0.to_bytes(Some(3)).unwrap();
    assert_eq!(run(), run());
}
