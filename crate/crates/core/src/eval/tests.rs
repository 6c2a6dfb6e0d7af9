use std::time::Duration;

use super::*;
use crate::dynamics::{Action, VehicleState};
use crate::env::{observe, EnvConfig, Task, Termination, TraceRecord};
use crate::error::Error;
use crate::nn::{Network, Topology};
use crate::rng::seeded;
use crate::world::{generate_scenario, ScenarioConfig};

fn pool(n: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()
}

fn actor(seed: u64) -> Network {
    Network::init(Topology::actor(&EnvConfig::default().grid), &mut seeded(seed, 0)).unwrap()
}

fn observation(speed: f64) -> crate::env::Observation {
    let mut cfg = ScenarioConfig::open_lot(Task::Driver);
    cfg.target_speed = [speed, speed];
    let s = generate_scenario(&cfg, 4).unwrap();
    observe(&s.start, &s, &EnvConfig::default())
}

#[test]
fn mode_rule() {
    assert_eq!(Mode::select(&observation(0.0)), Mode::Stopper);
    assert_eq!(Mode::select(&observation(0.5)), Mode::Driver);
    assert_eq!(Mode::select(&observation(3.3)), Mode::Driver);
}

#[test]
fn desired_steering_integration() {
    assert!((desired_steer(0.5, 1.2) - 0.524).abs() < 1e-12);
    assert_eq!(desired_steer(0.55, 1.2), 0.55);
    assert_eq!(desired_steer(-0.55, -1.2), -0.55);
    assert_eq!(desired_steer(0.1, 0.0), 0.1);
}

#[test]
fn controller_is_deterministic_and_uses_the_right_policy() {
    let ctl = DeepController::new(actor(1), actor(2)).unwrap();
    for speed in [0.0, 1.0] {
        let obs = observation(speed);
        let a = ctl.control(&obs).unwrap();
        let b = ctl.control(&obs).unwrap();
        assert_eq!((a.mode, a.action, a.steer_des), (b.mode, b.action, b.steer_des));
        let expect = ctl.policy(a.mode).policy(&obs).unwrap().mode();
        assert_eq!(a.action, expect);
        assert_eq!(a.steer_des, desired_steer(obs.steer(), expect.steer_rate));
    }
    // Batched acting agrees with single calls, for mixed batches too.
    let obs = vec![observation(0.0), observation(1.0), observation(0.0)];
    let batch = ctl.act(&obs).unwrap();
    for (o, a) in obs.iter().zip(batch) {
        assert_eq!(ctl.control(o).unwrap().action, a);
    }
}

#[test]
fn controller_rejects_value_networks() {
    let critic = Network::init(Topology::critic(&EnvConfig::default().grid), &mut seeded(1, 1)).unwrap();
    assert!(DeepController::new(actor(1), critic).is_err());
}

#[test]
fn evaluation_partitions_and_reproduces() {
    let env = EnvConfig { horizon: 60, ..EnvConfig::default() };
    let tasks = eval_scenarios(&ScenarioConfig::open_lot(Task::Driver), 11, 100).unwrap();
    let net = actor(3);
    let a = evaluate(&net, &tasks, &env, &pool(1)).unwrap();
    let b = evaluate(&net, &tasks, &env, &pool(3)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 100);
    assert!(a.iter().all(|o| o.termination.is_terminal() && o.steps <= 60));
    let report = EvaluationReport::new(&[("net".into(), a)]);
    assert_eq!(report.rows[0].tasks, 100);
    assert!((report.rows[0].percent_total() - 100.0).abs() < 1e-9);
}

#[test]
fn traced_run_matches_batched_outcome() {
    let env = EnvConfig { horizon: 40, ..EnvConfig::default() };
    let tasks = eval_scenarios(&ScenarioConfig::open_lot(Task::Driver), 2, 3).unwrap();
    let net = actor(5);
    let all = evaluate(&net, &tasks, &env, &pool(1)).unwrap();
    let (o, trace) = run_traced(&net, &tasks[1], &env).unwrap();
    assert_eq!(o, all[1]);
    assert_eq!(trace.len(), o.steps + 1);
    let total: f64 = trace.iter().map(|r| r.reward).sum();
    assert!((total - o.total_reward).abs() < 1e-9);
    assert_eq!(trace.last().unwrap().termination, o.termination.as_str());
}

fn outcome(reward: f64, termination: Termination) -> TaskOutcome {
    TaskOutcome { scenario_seed: 0, steps: 1, total_reward: reward, termination }
}

#[test]
fn report_normalization() {
    let r = EvaluationReport::new(&[
        ("a".into(), vec![outcome(2.0, Termination::Success), outcome(4.0, Termination::Timeout)]),
        ("b".into(), vec![outcome(6.0, Termination::Success), outcome(6.0, Termination::Success)]),
        ("c".into(), vec![outcome(-3.0, Termination::Collision), outcome(0.0, Termination::Overspeed)]),
    ]);
    let norm: Vec<f64> = r.rows.iter().map(|r| r.normalized_reward).collect();
    assert_eq!(norm, vec![0.5, 1.0, -0.25]);
    assert_eq!((r.rows[0].success, r.rows[0].timeout), (50.0, 50.0));
    assert_eq!((r.rows[2].collision, r.rows[2].overspeed), (50.0, 50.0));
    let table = r.to_string();
    assert!(table.contains("Succ.") && table.lines().count() == 4);
    let mut csv = Vec::new();
    r.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
}

#[test]
fn zero_conv_gives_zero_attention() {
    let mut net = actor(1);
    for b in net.blocks().into_iter().filter(|b| b.name.starts_with("conv1.")) {
        net.params[b.offset..b.offset + b.len].fill(0.0);
    }
    let a = attention(&net, &observation(1.0)).unwrap();
    assert_eq!((a.rows, a.cols), (16, 16));
    assert!(a.values.iter().all(|&v| v == 0.0));
}

#[test]
fn one_hot_feature_map_attention_is_its_square() {
    // Only channel 0 sees the input, through a centered unit tap, so its
    // pooled map is max-pool(ReLU(grid)): one-hot on the target cell.
    let mut net = actor(1);
    let t = net.topology().clone();
    let blocks = net.blocks();
    let w = blocks.iter().find(|b| b.name == "conv1.weight").unwrap();
    let b = blocks.iter().find(|b| b.name == "conv1.bias").unwrap();
    net.params[w.offset..w.offset + w.len].fill(0.0);
    net.params[b.offset..b.offset + b.len].fill(0.0);
    let k = t.kernel;
    net.params[w.offset + (k / 2) * k + k / 2] = 2.0;

    let mut obs = observation(1.0);
    obs.grid.cells.fill(0);
    obs.grid.set(9, 20, 1);
    let a = attention(&net, &obs).unwrap();
    for r in 0..a.rows {
        for c in 0..a.cols {
            let want = if (r, c) == (4, 10) { 4.0 } else { 0.0 };
            assert_eq!(a.get(r, c), want, "cell {r},{c}");
        }
    }
    let mut out = Vec::new();
    a.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 16);
    assert!(text.lines().all(|l| l.split(',').count() == 16));
}

#[test]
fn attention_is_non_negative() {
    let net = actor(2);
    for speed in [0.0, 1.0, 2.5] {
        let a = attention(&net, &observation(speed)).unwrap();
        assert!(a.values.iter().all(|&v| v >= 0.0));
        assert!(a.normalized().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

fn straight_trace(seed: u64, n: usize) -> Vec<TraceRecord> {
    let mut s = VehicleState::new(0.0, 0.0, 0.0, 0.0, 0.0);
    let mut out = Vec::new();
    for t in 0..=n {
        out.push(TraceRecord {
            scenario_seed: seed,
            t,
            x: s.x,
            y: s.y,
            v: s.v,
            heading: s.heading,
            steer: s.steer,
            accel: 1.0,
            steer_rate: 0.0,
            reward: 0.0,
            termination: if t == n { "timeout".into() } else { "running".into() },
        });
        s = crate::dynamics::step(&s, &Action::new(1.0, 0.0), 2.7, 0.1);
    }
    out
}

#[test]
fn replay_straight_line() {
    let env = EnvConfig::default();
    let scen = generate_scenario(&ScenarioConfig::open_lot(Task::Driver), 8).unwrap();
    let trace = straight_trace(scen.seed, 30);
    let plot = replay(&trace, &scen, &env).unwrap();
    assert_eq!(plot.path.len(), 31);
    assert!(plot.path.windows(2).all(|w| w[1][0] >= w[0][0]));
    assert!(plot.path.iter().all(|p| p[1] == 0.0));
    let vmax = trace.iter().map(|r| r.v).fold(f64::MIN, f64::max);
    assert_eq!(plot.speed.iter().copied().fold(f64::MIN, f64::max), vmax);
    assert_eq!(plot.speed_normalized.iter().copied().fold(f64::MIN, f64::max), 1.0);
    assert_eq!(plot.termination, "timeout");
    assert!(!plot.boundary.is_empty());
    let json = serde_json::to_string(&plot).unwrap();
    assert!(json.contains("\"path\""));
}

#[test]
fn replay_rejects_foreign_trace() {
    let env = EnvConfig::default();
    let scen = generate_scenario(&ScenarioConfig::open_lot(Task::Driver), 8).unwrap();
    let trace = straight_trace(scen.seed ^ 1, 5);
    assert!(matches!(replay(&trace, &scen, &env), Err(Error::TraceCorrupt(_))));
    assert!(matches!(replay(&[], &scen, &env), Err(Error::TraceCorrupt(_))));
}

#[test]
fn latency_summary() {
    let s: Vec<Duration> = (1..=100).map(Duration::from_millis).collect();
    let l = LatencyStats::from_samples(&s).unwrap();
    assert_eq!(l.calls, 100);
    assert!((l.mean_ms - 50.5).abs() < 1e-9);
    assert!((l.p99_ms - 99.0).abs() < 1e-9);
    assert!((l.max_ms - 100.0).abs() < 1e-9);
    assert!(LatencyStats::from_samples(&[]).is_none());
}
