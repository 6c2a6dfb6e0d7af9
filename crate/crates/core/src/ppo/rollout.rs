//! Rollout collection under a frozen policy.
//!
//! A fixed number of environment slots advance in lockstep so the networks
//! see one batch per step. Each slot owns its seed streams and a fixed share
//! of the step budget, and results are concatenated in slot order, so the
//! rollout does not depend on how many worker threads run it.

use rayon::prelude::*;

use super::forward_batched;
use crate::dynamics::Action;
use crate::env::{observe_noisy, EnvConfig, Episode, Observation, Termination, STATE_DIM};
use crate::error::Result;
use crate::nn::{sample_raw, Batch, Network, PolicyOutput};
use crate::rng::{derive, seeded, SimRng};
use crate::world::{generate_scenario, ScenarioConfig};

const TAG_SCENARIO: u64 = 0x5CE4;
const TAG_ACTION: u64 = 0xAC71;
const TAG_NOISE: u64 = 0x4015;

/// A maximal run of consecutive steps from one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
    /// The episode ended inside the rollout (any terminal condition).
    pub terminal: bool,
    /// `V(s)` of the state after the last step when the segment was cut off
    /// by the rollout boundary; zero otherwise.
    pub bootstrap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub scenario_seed: u64,
    pub length: usize,
    pub total_reward: f64,
    pub termination: Termination,
}

/// Per-step records of a rollout, stored column-wise.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutSet {
    pub grid_len: usize,
    pub states: Vec<f64>,
    pub grids: Vec<i8>,
    /// Actions applied to the environment (clipped to the bounds).
    pub actions: Vec<[f64; 2]>,
    /// The raw Gaussian draws behind `actions`; densities refer to these.
    pub samples: Vec<[f64; 2]>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// `log π_θ₀(a_t|s_t)` of the raw sample.
    pub log_probs: Vec<f64>,
    /// Outcome of each step; `Running` unless the step ended the episode.
    pub terminations: Vec<Termination>,
    pub episode_ids: Vec<usize>,
    pub segments: Vec<Segment>,
    /// Episodes that ended inside the rollout, in slot order.
    pub episodes: Vec<EpisodeSummary>,
}

impl RolloutSet {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Network inputs for the given step indices.
    pub fn batch(&self, idx: &[usize]) -> Batch {
        let mut b = Batch::default();
        for &i in idx {
            b.push(&self.states[i * STATE_DIM..(i + 1) * STATE_DIM], &self.grids[i * self.grid_len..(i + 1) * self.grid_len]);
        }
        b
    }

    fn push_step(&mut self, obs: &Observation, sample: [f64; 2], value: f64, log_prob: f64, episode: usize) {
        self.states.extend_from_slice(&obs.state);
        self.grids.extend_from_slice(&obs.grid.cells);
        let a = Action::new(sample[0], sample[1]).clamped();
        self.actions.push([a.accel, a.steer_rate]);
        self.samples.push(sample);
        self.values.push(value);
        self.log_probs.push(log_prob);
        self.episode_ids.push(episode);
    }

    fn append(&mut self, mut other: RolloutSet, episode_offset: usize) {
        let base = self.len();
        self.grid_len = other.grid_len;
        self.states.append(&mut other.states);
        self.grids.append(&mut other.grids);
        self.actions.append(&mut other.actions);
        self.samples.append(&mut other.samples);
        self.rewards.append(&mut other.rewards);
        self.values.append(&mut other.values);
        self.log_probs.append(&mut other.log_probs);
        self.terminations.append(&mut other.terminations);
        self.episode_ids.extend(other.episode_ids.iter().map(|e| e + episode_offset));
        self.segments.extend(other.segments.iter().map(|s| Segment { start: s.start + base, ..*s }));
        self.episodes.append(&mut other.episodes);
    }
}

/// Where a rollout runs and how its randomness is keyed.
pub struct RolloutContext<'a> {
    pub env: &'a EnvConfig,
    pub scenarios: &'a ScenarioConfig,
    pub seed: u64,
    pub epoch: u64,
    /// Number of lockstep environment slots.
    pub slots: usize,
    pub pool: &'a rayon::ThreadPool,
}

struct Slot {
    index: usize,
    budget: usize,
    data: RolloutSet,
    episode: Episode,
    obs: Observation,
    seg_start: usize,
    episodes_started: usize,
    act_rng: SimRng,
    noise_rng: SimRng,
}

impl Slot {
    fn scenario_seed(ctx: &RolloutContext, slot: usize, k: usize) -> u64 {
        derive(ctx.seed, &[TAG_SCENARIO, ctx.epoch, slot as u64, k as u64])
    }

    fn new(ctx: &RolloutContext, index: usize, budget: usize) -> Result<Self> {
        let mut noise_rng = seeded(derive(ctx.seed, &[TAG_NOISE, ctx.epoch]), index as u64);
        let scenario = generate_scenario(ctx.scenarios, Self::scenario_seed(ctx, index, 0))?;
        let episode = Episode::new(scenario);
        let obs = observe_noisy(&episode.state, &episode.scenario, ctx.env, &mut noise_rng);
        Ok(Self {
            index,
            budget,
            data: RolloutSet { grid_len: obs.grid.cells.len(), ..RolloutSet::default() },
            episode,
            obs,
            seg_start: 0,
            episodes_started: 1,
            act_rng: seeded(derive(ctx.seed, &[TAG_ACTION, ctx.epoch]), index as u64),
            noise_rng,
        })
    }

    fn step(&mut self, ctx: &RolloutContext, mu: [f64; 2], sigma: [f64; 2], value: f64) -> Result<()> {
        let out = PolicyOutput { mu, sigma };
        let (raw, log_prob) = sample_raw(&out, &mut self.act_rng);
        let episode_id = self.episodes_started - 1;
        self.data.push_step(&self.obs, raw, value, log_prob, episode_id);
        let action = Action::new(raw[0], raw[1]);
        let (r, term) = self.episode.advance(&action, ctx.env);
        self.data.rewards.push(r);
        self.data.terminations.push(term);
        self.budget -= 1;

        if term.is_terminal() {
            let len = self.data.len() - self.seg_start;
            self.data.segments.push(Segment { start: self.seg_start, len, terminal: true, bootstrap: 0.0 });
            self.data.episodes.push(EpisodeSummary {
                scenario_seed: self.episode.scenario.seed,
                length: self.episode.t,
                total_reward: self.episode.total_reward,
                termination: term,
            });
            self.seg_start = self.data.len();
            if self.budget > 0 {
                let seed = Self::scenario_seed(ctx, self.index, self.episodes_started);
                self.episode = Episode::new(generate_scenario(ctx.scenarios, seed)?);
                self.episodes_started += 1;
            }
        }
        if self.budget > 0 {
            self.obs = observe_noisy(&self.episode.state, &self.episode.scenario, ctx.env, &mut self.noise_rng);
        } else if !term.is_terminal() {
            // Cut off: the observation after the last step is needed for the
            // bootstrap value.
            self.obs = observe_noisy(&self.episode.state, &self.episode.scenario, ctx.env, &mut self.noise_rng);
            let len = self.data.len() - self.seg_start;
            self.data.segments.push(Segment { start: self.seg_start, len, terminal: false, bootstrap: 0.0 });
        }
        Ok(())
    }
}

/// Collects exactly `n` steps following `actor`, recording `critic` values.
pub fn collect_rollout(actor: &Network, critic: &Network, n: usize, ctx: &RolloutContext) -> Result<RolloutSet> {
    let slots_n = ctx.slots.clamp(1, n.max(1));
    let sigma = actor.sigma();
    let sigma = [sigma[0], sigma[1]];
    let mut slots = (0..slots_n)
        .map(|i| Slot::new(ctx, i, n / slots_n + usize::from(i < n % slots_n)))
        .collect::<Result<Vec<_>>>()?;

    loop {
        let active: Vec<usize> = (0..slots.len()).filter(|&i| slots[i].budget > 0).collect();
        if active.is_empty() {
            break;
        }
        let batch = Batch::from_observations(active.iter().map(|&i| &slots[i].obs));
        let mu = forward_batched(actor, &batch, ctx.pool)?;
        let values = forward_batched(critic, &batch, ctx.pool)?;
        let mut targets: Vec<(&mut Slot, usize)> =
            slots.iter_mut().filter(|s| s.budget > 0).enumerate().map(|(k, s)| (s, k)).collect();
        let results: Vec<Result<()>> = ctx.pool.install(|| {
            targets
                .par_iter_mut()
                .map(|(slot, k)| slot.step(ctx, [mu[2 * *k], mu[2 * *k + 1]], sigma, values[*k]))
                .collect()
        });
        results.into_iter().collect::<Result<Vec<()>>>()?;
    }

    // Bootstrap values for segments cut off by the budget.
    let cut: Vec<usize> = (0..slots.len()).filter(|&i| slots[i].data.segments.last().is_some_and(|s| !s.terminal)).collect();
    if !cut.is_empty() {
        let batch = Batch::from_observations(cut.iter().map(|&i| &slots[i].obs));
        let v = forward_batched(critic, &batch, ctx.pool)?;
        for (k, &i) in cut.iter().enumerate() {
            slots[i].data.segments.last_mut().unwrap().bootstrap = v[k];
        }
    }

    let mut out = RolloutSet::default();
    let mut episode_offset = 0;
    for slot in slots {
        let started = slot.episodes_started;
        out.append(slot.data, episode_offset);
        episode_offset += started;
    }
    Ok(out)
}
