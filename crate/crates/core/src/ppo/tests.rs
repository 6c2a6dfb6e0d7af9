use super::*;
use crate::dynamics::{ACCEL_MAX, STEER_RATE_MAX};
use crate::env::{EnvConfig, PhaseSchedule, Task};
use crate::nn::Topology;
use crate::rng::seeded;
use crate::world::ScenarioConfig;

fn pool(n: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()
}

fn nets(env: &EnvConfig) -> (Network, Network) {
    (
        Network::init(Topology::actor(&env.grid), &mut seeded(1, 0)).unwrap(),
        Network::init(Topology::critic(&env.grid), &mut seeded(1, 1)).unwrap(),
    )
}

fn rollout(n: usize, horizon: usize, slots: usize, workers: usize) -> RolloutSet {
    let env = EnvConfig { horizon, ..EnvConfig::default() };
    let scen = ScenarioConfig::open_lot(Task::Driver);
    let (actor, critic) = nets(&env);
    let p = pool(workers);
    let ctx = RolloutContext { env: &env, scenarios: &scen, seed: 9, epoch: 0, slots, pool: &p };
    collect_rollout(&actor, &critic, n, &ctx).unwrap()
}

#[test]
fn short_horizon_forces_episode_boundaries() {
    let r = rollout(10, 5, 1, 1);
    assert_eq!(r.len(), 10);
    let ends = r.terminations.iter().filter(|t| t.is_terminal()).count();
    assert!(ends >= 2, "{ends} boundaries");
}

#[test]
fn rollout_accounting_and_bounds() {
    let r = rollout(97, 20, 4, 1);
    assert_eq!(r.len(), 97);
    assert_eq!(r.segments.iter().map(|s| s.len).sum::<usize>(), 97);
    // Segments tile the rollout and each one is a single episode.
    let mut at = 0;
    for s in &r.segments {
        assert_eq!(s.start, at);
        at += s.len;
        let ids = &r.episode_ids[s.start..s.start + s.len];
        assert!(ids.iter().all(|&i| i == ids[0]));
        let last = r.terminations[s.start + s.len - 1];
        assert_eq!(last.is_terminal(), s.terminal);
        assert!(r.terminations[s.start..s.start + s.len - 1].iter().all(|t| !t.is_terminal()));
        if s.terminal {
            assert_eq!(s.bootstrap, 0.0);
        }
    }
    assert_eq!(r.episodes.len(), r.segments.iter().filter(|s| s.terminal).count());
    assert!(r.log_probs.iter().all(|l| l.is_finite()));
    for a in &r.actions {
        assert!(a[0].abs() <= ACCEL_MAX && a[1].abs() <= STEER_RATE_MAX);
    }
    assert_eq!(r.states.len(), 97 * crate::env::STATE_DIM);
}

#[test]
fn rollout_is_deterministic_across_worker_counts() {
    let a = rollout(64, 30, 4, 1);
    let b = rollout(64, 30, 4, 1);
    let c = rollout(64, 30, 4, 3);
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn gae_over_rollout_matches_segments() {
    let r = rollout(40, 12, 2, 1);
    let g = compute_gae(&r, 0.99, 0.95);
    for s in &r.segments {
        let range = s.start..s.start + s.len;
        let last = if s.terminal { 0.0 } else { s.bootstrap };
        let want = segment_advantages(&r.rewards[range.clone()], &r.values[range.clone()], last, 0.99, 0.95);
        assert_eq!(&g.advantages[range.clone()], &want[..]);
        for i in range {
            assert_eq!(g.returns[i], g.advantages[i] + r.values[i]);
        }
    }
}

fn tiny_setup(workers: usize) -> TrainSetup {
    TrainSetup {
        train: TrainConfig { rollout: 256, minibatch: 64, steps: 4, envs: 8, max_epochs: 2, ..TrainConfig::default() },
        env: EnvConfig { horizon: 40, ..EnvConfig::default() },
        scenarios: ScenarioConfig::open_lot(Task::Driver),
        phases: PhaseSchedule::default(),
        seed: 5,
        workers,
    }
}

#[test]
fn tiny_training_runs_and_is_reproducible() {
    let mut t1 = Trainer::new(tiny_setup(1)).unwrap();
    let m1 = t1.train_epoch().unwrap();
    assert_eq!(m1.epoch, 1);
    assert!(m1.policy_loss.is_finite() && m1.value_loss.is_finite());
    let before = Trainer::new(tiny_setup(1)).unwrap();
    assert_ne!(before.actor.params, t1.actor.params);

    let mut t2 = Trainer::new(tiny_setup(2)).unwrap();
    let m2 = t2.train_epoch().unwrap();
    assert_eq!(m1, m2);
    assert_eq!(t1.actor.params, t2.actor.params);
    assert_eq!(t1.critic.params, t2.critic.params);
}

#[test]
fn run_writes_log_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let mut setup = tiny_setup(1);
    setup.train.checkpoint_every = 1;
    let mut t = Trainer::new(setup.clone()).unwrap();
    let mut rows = Vec::new();
    let out = t.run(Some(dir.path()), |m| rows.push(m.clone())).unwrap();
    assert_eq!(out.epochs, 2);
    let log = TrainingLog::read(&dir.path().join("train_log.csv")).unwrap();
    assert_eq!(log, rows);
    assert!(checkpoint_path(dir.path(), 1).exists());
    let ck = crate::nn::Checkpoint::load(&dir.path().join("final.ckpt")).unwrap();
    assert_eq!(ck.meta.epoch, 2);
    assert_eq!(ck.actor, t.actor);

    // Resuming from epoch 1 reproduces epoch 2 exactly.
    let ck1 = crate::nn::Checkpoint::load(&checkpoint_path(dir.path(), 1)).unwrap();
    let mut resumed = Trainer::resume(setup, ck1, &log[..1]).unwrap();
    let m = resumed.train_epoch().unwrap();
    assert_eq!(m, log[1]);
}

#[test]
fn divergence_is_detected_and_rolled_back() {
    let mut t = Trainer::new(tiny_setup(1)).unwrap();
    t.actor_opt.config.alpha = f64::INFINITY;
    let before = t.actor.params.clone();
    assert!(matches!(t.train_epoch(), Err(crate::Error::DivergenceDetected { epoch: 1 })));
    assert_eq!(t.actor.params, before);
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    let bad = TrainConfig { minibatch: 20_000, ..TrainConfig::default() };
    assert!(bad.validate().is_err());
    let bad = TrainConfig { gamma: 0.0, ..TrainConfig::default() };
    assert!(bad.validate().is_err());
    let mut s = tiny_setup(1);
    s.scenarios.task = Task::Stopper;
    assert!(Trainer::new(s).is_err());
}

#[test]
fn unit_ratio_gradient_equals_vanilla_policy_gradient() {
    use crate::nn::{log_density, Batch, Head};
    use rand::Rng;

    let topo = Topology {
        state_dim: 7,
        hidden: 5,
        grid_rows: 8,
        grid_cols: 8,
        channels: 2,
        kernel: 3,
        head: Head::Policy { bounds: vec![1.2, 1.2], log_std_init: 0.5f64.ln() },
    };
    let mut rng = seeded(3, 0);
    let mut net = Network::init(topo.clone(), &mut rng).unwrap();
    for p in &mut net.params {
        *p += rng.random_range(-0.05..0.05);
    }
    let n = 6;
    let mut batch = Batch::default();
    for _ in 0..n {
        let s: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        batch.len += 1;
        batch.states.extend_from_slice(&s);
        batch.grids.extend((0..64).map(|_| rng.random_range(-1.0..1.0)));
    }
    let actions: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let adv: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();

    let log_probs = |net: &Network| -> Vec<f64> {
        let cache = net.forward(&batch).unwrap();
        let ls = net.log_std();
        (0..n).map(|i| log_density(&[cache.output[2 * i], cache.output[2 * i + 1]], &[ls[0], ls[1]], &actions[i])).collect()
    };
    let old = log_probs(&net);

    // Analytic PPO gradient at θ = θ₀.
    let cache = net.forward(&batch).unwrap();
    let ls = net.log_std();
    let p = policy_loss(&cache.output, [ls[0], ls[1]], &actions, &old, &adv, 0.1, 1.0 / n as f64);
    assert_eq!(p.clipped, 0);
    let mean_adv = adv.iter().sum::<f64>() / n as f64;
    assert!((p.loss + mean_adv).abs() < 1e-14);
    let mut g = vec![0.0; net.param_count()];
    net.backward(&cache, &p.d_mu, &mut g);
    for (gi, d) in g[net.log_std_range()].iter_mut().zip(p.d_log_std) {
        *gi += d;
    }

    // Oracle: central differences of −mean(Â·log π_θ(a)).
    let vanilla = |net: &Network| -> f64 { -log_probs(net).iter().zip(&adv).map(|(l, a)| l * a).sum::<f64>() / n as f64 };
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..net.param_count() {
        let keep = net.params[i];
        net.params[i] = keep + h;
        let up = vanilla(&net);
        net.params[i] = keep - h;
        let down = vanilla(&net);
        net.params[i] = keep;
        let fd = (up - down) / (2.0 * h);
        let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}
