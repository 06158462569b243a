#![allow(clippy::needless_range_loop)]

mod support;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wirebeam_core::dqn::{
    grad, huber, td_target, train, MlpParams, ReplayBuffer, TrainConfig, TrainEvent, TrainOptions,
    Trainer, Transition,
};
use wirebeam_core::env::{ActionIndex, Environment, StateVector, StepOutcome, TrackingEnv};
use wirebeam_core::Result;

/// Plain nested-loop forward pass; also reports the smallest |pre-activation|
/// seen on a hidden layer.
fn reference_forward(net: &MlpParams, x: &[f64]) -> (Vec<f64>, f64) {
    let mut a = x.to_vec();
    let mut closest_kink = f64::INFINITY;
    let last = net.layers.len() - 1;
    for (l, layer) in net.layers.iter().enumerate() {
        let (rows, cols) = layer.weights.dim();
        let mut z = vec![0.0; rows];
        for i in 0..rows {
            let mut s = layer.bias[i];
            for j in 0..cols {
                s += layer.weights[[i, j]] * a[j];
            }
            z[i] = s;
        }
        if l != last {
            closest_kink = z.iter().fold(closest_kink, |m, v| m.min(v.abs()));
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        a = z;
    }
    (a, closest_kink)
}

#[test]
fn forward_matches_reference_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let net = MlpParams::init(&[9, 128, 128, 128, 9], &mut rng);
    for _ in 0..20 {
        let x: Vec<f64> = (0..9).map(|_| rng.random_range(-2.0..2.0)).collect();
        let fast = net.forward(&x).unwrap();
        let (slow, _) = reference_forward(&net, &x);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

fn random_tiny_net(rng: &mut ChaCha8Rng) -> MlpParams {
    let depth = rng.random_range(1..=3);
    let mut dims = vec![rng.random_range(1..=4)];
    for _ in 0..depth {
        dims.push(rng.random_range(1..=4));
    }
    dims.push(9);
    let mut net = MlpParams::init(&dims, rng);
    // Larger output weights and non-zero biases so every parameter matters.
    for v in net.values_mut() {
        *v += rng.random_range(-0.5..0.5);
    }
    net
}

fn loss_of(net: &MlpParams, tr: &Transition, y: f64) -> f64 {
    let (q, _) = reference_forward(net, tr.state.as_slice());
    huber(q[tr.action.index()] - y)
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xFD);
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 50 {
        let net = random_tiny_net(&mut rng);
        let target = random_tiny_net_like(&net, &mut rng);
        let dim = net.input_dim();
        let tr = Transition {
            state: StateVector((0..dim).map(|_| rng.random_range(-1.5..1.5)).collect()),
            action: ActionIndex::new(rng.random_range(0..9)).unwrap(),
            reward: rng.random_range(-1.0..1.0),
            next_state: StateVector((0..dim).map(|_| rng.random_range(-1.5..1.5)).collect()),
            terminal: rng.random_bool(0.2),
        };
        let y = td_target(&tr, &target, 0.99).unwrap();
        let (q, kink) = reference_forward(&net, tr.state.as_slice());
        let residual = q[tr.action.index()] - y;
        if kink < 1e-3 || (residual.abs() - 1.0).abs() < 1e-3 {
            continue;
        }

        let (g, loss) = grad(&net, &[&tr], &target, 0.99).unwrap();
        assert!((loss - huber(residual)).abs() < 1e-12);
        let h = 1e-5;
        let analytic: Vec<f64> = g.values().collect();
        for (k, &ga) in analytic.iter().enumerate() {
            let mut plus = net.clone();
            *plus.values_mut().nth(k).unwrap() += h;
            let mut minus = net.clone();
            *minus.values_mut().nth(k).unwrap() -= h;
            let fd = (loss_of(&plus, &tr, y) - loss_of(&minus, &tr, y)) / (2.0 * h);
            let scale = ga.abs().max(fd.abs());
            let err = if scale < 1e-7 {
                (ga - fd).abs()
            } else {
                (ga - fd).abs() / scale
            };
            worst = worst.max(err);
        }
        checked += 1;
    }
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

fn random_tiny_net_like(net: &MlpParams, rng: &mut ChaCha8Rng) -> MlpParams {
    let mut t = MlpParams::init(&net.dims(), rng);
    for v in t.values_mut() {
        *v += rng.random_range(-0.3..0.3);
    }
    t
}

fn tracking_factory() -> impl FnMut() -> Result<TrackingEnv> {
    let setup = support::reference_setup();
    move || TrackingEnv::new(setup.clone())
}

#[test]
fn smoke_schedule_runs_two_phases() {
    let out = train(tracking_factory(), &TrainConfig::smoke(), 5).unwrap();
    let steps: Vec<usize> = out.log.iter().map(|r| r.global_step).collect();
    assert_eq!(steps, vec![300, 600]);
    assert_eq!(out.steps, 600);
    assert!(out
        .log
        .iter()
        .all(|r| r.loss.is_finite() && r.mean_eval_power_dbm.is_finite()));
}

#[test]
fn warm_up_defers_updates_until_the_block_exists() {
    let cfg = TrainConfig {
        total_steps: 1200,
        sample_block: 700,
        ..TrainConfig::smoke()
    };
    let out = train(tracking_factory(), &cfg, 2).unwrap();
    let steps: Vec<usize> = out.log.iter().map(|r| r.global_step).collect();
    assert_eq!(steps, vec![900, 1200]);
}

#[test]
fn target_network_only_changes_on_sync() {
    let cfg = TrainConfig {
        total_steps: 900,
        ..TrainConfig::smoke()
    };
    let mut trainer = Trainer::new(cfg, 9, 8, TrainOptions::default()).unwrap();
    let mut expected = trainer.target().fingerprint();
    let initial_online = trainer.online().fingerprint();
    let mut syncs = 0;
    let mut online_moved = false;
    trainer
        .run(tracking_factory(), |ev, online, target| match ev {
            TrainEvent::TargetSynced { .. } => {
                assert_eq!(target, online);
                expected = target.fingerprint();
                syncs += 1;
            }
            _ => {
                assert_eq!(
                    target.fingerprint(),
                    expected,
                    "target changed outside a sync: {ev:?}"
                );
                online_moved |= online.fingerprint() != initial_online;
            }
        })
        .unwrap();
    assert_eq!(syncs, 3);
    assert!(online_moved);
}

#[test]
fn fixed_seed_training_is_bit_identical() {
    let a = train(tracking_factory(), &TrainConfig::smoke(), 77).unwrap();
    let b = train(tracking_factory(), &TrainConfig::smoke(), 77).unwrap();
    assert_eq!(a.params.fingerprint(), b.params.fingerprint());
    assert_eq!(a.params, b.params);
    assert_eq!(a.log, b.log);
    let c = train(tracking_factory(), &TrainConfig::smoke(), 78).unwrap();
    assert_ne!(a.params.fingerprint(), c.params.fingerprint());
}

#[test]
fn replay_sampling_is_uniform() {
    let n = 100;
    let mut buf = ReplayBuffer::new(n);
    for i in 0..n {
        buf.push(Transition {
            state: StateVector(vec![i as f64]),
            action: ActionIndex::CENTER,
            reward: 0.0,
            next_state: StateVector(vec![i as f64]),
            terminal: false,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut counts = vec![0usize; n];
    let draws = 20_000;
    let per_draw = 10;
    for _ in 0..draws {
        let idx = buf.sample_indices(per_draw, &mut rng);
        let mut seen = idx.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), per_draw, "duplicate within one draw");
        for i in idx {
            counts[buf.get(i).state.as_slice()[0] as usize] += 1;
        }
    }
    let expected = (draws * per_draw) as f64 / n as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // 99.9th percentile of chi-square with 99 degrees of freedom is about 148.
    assert!(chi2 < 148.0, "chi2 = {chi2}");
}

/// Constant observation, reward 1 for every action.
struct RewardOneStub;

impl Environment for RewardOneStub {
    fn state_dim(&self) -> usize {
        3
    }

    fn reset(&mut self, _seed: u64) -> Result<StateVector> {
        Ok(StateVector(vec![0.1, -0.2, 0.3]))
    }

    fn step(&mut self, _action: ActionIndex) -> Result<StepOutcome> {
        Ok(StepOutcome {
            next_state: StateVector(vec![0.1, -0.2, 0.3]),
            proxy_reward: 1.0,
            raw_power_dbm: 0.0,
            episode_done: false,
            optimal_power_dbm: 0.0,
        })
    }
}

#[test]
fn q_values_reach_the_bellman_fixed_point() {
    let cfg = TrainConfig {
        hidden: vec![16, 16],
        learning_rate: 1e-3,
        update_period_steps: 1,
        sample_block: 32,
        minibatch: 32,
        epochs: 4,
        outer_iterations: 1,
        target_sync_steps: 40,
        total_steps: 16000,
        eval_steps: 1,
        replay_capacity: 1000,
        ..TrainConfig::default()
    };
    let out = train(|| Ok(RewardOneStub), &cfg, 3).unwrap();
    let q = out.params.forward(&[0.1, -0.2, 0.3]).unwrap();
    for v in q {
        assert!((v - 100.0).abs() < 2.0, "Q = {v}");
    }
}
