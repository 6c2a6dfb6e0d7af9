//! Batch evaluation on seeded control tasks and per-policy summary reports.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::controller::Policy;
use crate::dynamics::Action;
use crate::env::{observe_noisy, EnvConfig, Episode, Observation, Termination, TraceRecord};
use crate::error::Result;
use crate::rng::{derive, seeded, SimRng};
use crate::world::{generate_scenario, Scenario, ScenarioConfig};

const TAG_EVAL: u64 = 0xE7A1;
const TAG_EVAL_NOISE: u64 = 0xE7A2;

/// Tasks stepped together in one batched forward pass. Fixed, so results do
/// not depend on the number of workers.
const LOCKSTEP: usize = 32;

/// Seed of the `index`-th evaluation task. Distinct from the training
/// stream tags, so held-out tasks do not overlap training ones.
pub fn task_seed(seed: u64, index: usize) -> u64 {
    derive(seed, &[TAG_EVAL, index as u64])
}

pub fn eval_scenarios(config: &ScenarioConfig, seed: u64, count: usize) -> Result<Vec<Scenario>> {
    (0..count).map(|i| generate_scenario(config, task_seed(seed, i))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub scenario_seed: u64,
    pub steps: usize,
    pub total_reward: f64,
    pub termination: Termination,
}

struct Runner {
    episode: Episode,
    noise: SimRng,
    obs: Observation,
    trace: Option<Vec<TraceRecord>>,
}

impl Runner {
    fn new(scenario: &Scenario, env: &EnvConfig, record: bool) -> Self {
        let episode = Episode::new(scenario.clone());
        let mut noise = seeded(scenario.seed, TAG_EVAL_NOISE);
        let obs = observe_noisy(&episode.state, &episode.scenario, env, &mut noise);
        let trace = record.then(|| vec![record_of(&episode, Action::ZERO, 0.0)]);
        Self { episode, noise, obs, trace }
    }
}

fn record_of(ep: &Episode, a: Action, reward: f64) -> TraceRecord {
    let s = ep.state;
    TraceRecord {
        scenario_seed: ep.scenario.seed,
        t: ep.t,
        x: s.x,
        y: s.y,
        v: s.v,
        heading: s.heading,
        steer: s.steer,
        accel: a.accel,
        steer_rate: a.steer_rate,
        reward,
        termination: ep.termination.as_str().to_string(),
    }
}

/// Runs a group of tasks to termination in lockstep.
fn run_group<P: Policy + ?Sized>(
    policy: &P,
    tasks: &[Scenario],
    env: &EnvConfig,
    record: bool,
) -> Result<Vec<(TaskOutcome, Option<Vec<TraceRecord>>)>> {
    let mut runners: Vec<Runner> = tasks.iter().map(|s| Runner::new(s, env, record)).collect();
    loop {
        let live: Vec<usize> = (0..runners.len()).filter(|&i| !runners[i].episode.termination.is_terminal()).collect();
        if live.is_empty() {
            break;
        }
        let obs: Vec<Observation> = live.iter().map(|&i| runners[i].obs.clone()).collect();
        let actions = policy.act(&obs)?;
        for (&i, a) in live.iter().zip(actions) {
            let r = &mut runners[i];
            let (reward, term) = r.episode.advance(&a, env);
            if let Some(tr) = &mut r.trace {
                tr.push(record_of(&r.episode, a, reward));
            }
            if !term.is_terminal() {
                r.obs = observe_noisy(&r.episode.state, &r.episode.scenario, env, &mut r.noise);
            }
        }
    }
    Ok(runners
        .into_iter()
        .map(|r| {
            let e = &r.episode;
            let o = TaskOutcome {
                scenario_seed: e.scenario.seed,
                steps: e.t,
                total_reward: e.total_reward,
                termination: e.termination,
            };
            (o, r.trace)
        })
        .collect())
}

/// Runs every task to termination with deterministic actions.
pub fn evaluate<P: Policy + ?Sized>(
    policy: &P,
    tasks: &[Scenario],
    env: &EnvConfig,
    pool: &rayon::ThreadPool,
) -> Result<Vec<TaskOutcome>> {
    let groups: Vec<Result<Vec<_>>> =
        pool.install(|| tasks.par_chunks(LOCKSTEP).map(|g| run_group(policy, g, env, false)).collect());
    let mut out = Vec::with_capacity(tasks.len());
    for g in groups {
        out.extend(g?.into_iter().map(|(o, _)| o));
    }
    Ok(out)
}

/// Runs a single task and returns its outcome with the per-step trace.
pub fn run_traced<P: Policy + ?Sized>(
    policy: &P,
    task: &Scenario,
    env: &EnvConfig,
) -> Result<(TaskOutcome, Vec<TraceRecord>)> {
    let mut r = run_group(policy, std::slice::from_ref(task), env, true)?;
    let (o, t) = r.pop().expect("one task");
    Ok((o, t.expect("trace was requested")))
}

/// One policy's aggregate row. Percentages are in [0, 100].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub policy: String,
    pub tasks: usize,
    pub mean_reward: f64,
    pub normalized_reward: f64,
    pub success: f64,
    pub collision: f64,
    pub timeout: f64,
    pub overspeed: f64,
}

impl ReportRow {
    pub fn percent_total(&self) -> f64 {
        self.success + self.collision + self.timeout + self.overspeed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub rows: Vec<ReportRow>,
}

impl EvaluationReport {
    /// Aggregates outcomes per policy. Mean rewards are divided by the
    /// largest magnitude among the compared rows, so the best row reads 1.0
    /// whenever it is positive.
    pub fn new(results: &[(String, Vec<TaskOutcome>)]) -> Self {
        let mut rows: Vec<ReportRow> = results
            .iter()
            .map(|(name, outcomes)| {
                let n = outcomes.len();
                let pct = |t: Termination| {
                    100.0 * outcomes.iter().filter(|o| o.termination == t).count() as f64 / n.max(1) as f64
                };
                ReportRow {
                    policy: name.clone(),
                    tasks: n,
                    mean_reward: outcomes.iter().map(|o| o.total_reward).sum::<f64>() / n.max(1) as f64,
                    normalized_reward: 0.0,
                    success: pct(Termination::Success),
                    collision: pct(Termination::Collision),
                    timeout: pct(Termination::Timeout),
                    overspeed: pct(Termination::Overspeed),
                }
            })
            .collect();
        let scale = rows.iter().map(|r| r.mean_reward.abs()).fold(0.0, f64::max);
        for r in &mut rows {
            r.normalized_reward = if scale > 0.0 { r.mean_reward / scale } else { 0.0 };
        }
        Self { rows }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.policy.len()).max().unwrap_or(0).max(6);
        writeln!(
            f,
            "{:<width$}  {:>6}  {:>7}  {:>7}  {:>7}  {:>7}  {:>6}",
            "Policy", "∅ Rew.", "Succ.", "Coll.", "Time", "Speed", "Tasks"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<width$}  {:>6.3}  {:>6.1}%  {:>6.1}%  {:>6.1}%  {:>6.1}%  {:>6}",
                r.policy, r.normalized_reward, r.success, r.collision, r.timeout, r.overspeed, r.tasks
            )?;
        }
        Ok(())
    }
}
