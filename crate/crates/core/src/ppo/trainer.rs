//! The epoch loop: rollout, advantages, K minibatch Adam steps.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::log::{ConvergenceMonitor, EpochMetrics, TrainingLog};
use super::loss::{normalize, policy_loss, value_loss};
use super::rollout::{collect_rollout, RolloutContext, RolloutSet};
use super::{compute_gae, TrainConfig, CHUNK};
use crate::env::{EnvConfig, Phase, PhaseSchedule, Termination};
use crate::error::{Error, Result};
use crate::nn::{Adam, Checkpoint, CheckpointMeta, Network, Topology};
use crate::rng::{derive, seeded};
use crate::world::ScenarioConfig;

const TAG_ACTOR: u64 = 0xAC70;
const TAG_CRITIC: u64 = 0xC121;
const TAG_MINIBATCH: u64 = 0x3B47;

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSetup {
    pub train: TrainConfig,
    pub env: EnvConfig,
    pub scenarios: ScenarioConfig,
    pub phases: PhaseSchedule,
    pub seed: u64,
    /// Worker threads; results do not depend on this.
    pub workers: usize,
}

impl TrainSetup {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.env.validate()?;
        self.scenarios.validate()?;
        if self.scenarios.task != self.env.reward.task {
            return Err(Error::ConfigInvalid(format!(
                "scenario task {} differs from reward task {}",
                self.scenarios.task, self.env.reward.task
            )));
        }
        if self.workers == 0 {
            return Err(Error::ConfigInvalid("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// How a call to [`Trainer::run`] ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOutcome {
    pub epochs: u64,
    pub converged: bool,
}

pub struct Trainer {
    setup: TrainSetup,
    pub actor: Network,
    pub critic: Network,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    epoch: u64,
    success_history: Vec<f64>,
    monitor: ConvergenceMonitor,
    pool: rayon::ThreadPool,
}

struct Gradients {
    actor: Vec<f64>,
    critic: Vec<f64>,
    policy_loss: f64,
    value_loss: f64,
    clipped: usize,
}

impl Trainer {
    pub fn new(setup: TrainSetup) -> Result<Self> {
        setup.validate()?;
        let actor = Network::init(Topology::actor(&setup.env.grid), &mut seeded(setup.seed, TAG_ACTOR))?;
        let critic = Network::init(Topology::critic(&setup.env.grid), &mut seeded(setup.seed, TAG_CRITIC))?;
        let actor_opt = Adam::new(setup.train.adam, actor.param_count());
        let critic_opt = Adam::new(setup.train.adam, critic.param_count());
        Self::assemble(setup, actor, critic, actor_opt, critic_opt, 0)
    }

    /// Continues from a checkpoint. `history` (the earlier log rows) restores
    /// the phase-switch and convergence bookkeeping.
    pub fn resume(mut setup: TrainSetup, ck: Checkpoint, history: &[EpochMetrics]) -> Result<Self> {
        if ck.meta.task != setup.env.reward.task {
            return Err(Error::ConfigInvalid(format!("checkpoint is for task {}", ck.meta.task)));
        }
        if ck.actor.topology() != &Topology::actor(&setup.env.grid) {
            return Err(Error::ConfigInvalid("checkpoint topology differs from the configured grid".into()));
        }
        setup.env.reward.phase = ck.meta.phase;
        let mut t = Self::assemble(setup, ck.actor, ck.critic, ck.actor_opt, ck.critic_opt, ck.meta.epoch)?;
        for row in history.iter().filter(|r| r.epoch <= ck.meta.epoch) {
            t.success_history.push(row.success);
            t.monitor.push(row.mean_reward);
        }
        Ok(t)
    }

    fn assemble(setup: TrainSetup, actor: Network, critic: Network, actor_opt: Adam, critic_opt: Adam, epoch: u64) -> Result<Self> {
        setup.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(setup.workers)
            .build()
            .map_err(|e| Error::ConfigInvalid(format!("thread pool: {e}")))?;
        let t = &setup.train;
        let monitor = ConvergenceMonitor::new(t.convergence_window, t.convergence_tolerance, t.convergence_patience);
        Ok(Self { setup, actor, critic, actor_opt, critic_opt, epoch, success_history: Vec::new(), monitor, pool })
    }

    pub fn setup(&self) -> &TrainSetup {
        &self.setup
    }

    /// Completed epochs.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn phase(&self) -> Phase {
        self.setup.env.reward.phase
    }

    pub fn env(&self) -> &EnvConfig {
        &self.setup.env
    }

    pub fn converged(&self) -> bool {
        self.monitor.converged()
    }

    pub fn pool(&self) -> &rayon::ThreadPool {
        &self.pool
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            meta: CheckpointMeta {
                task: self.setup.env.reward.task,
                phase: self.phase(),
                epoch: self.epoch,
                seed: self.setup.seed,
            },
            actor: self.actor.clone(),
            critic: self.critic.clone(),
            actor_opt: self.actor_opt.clone(),
            critic_opt: self.critic_opt.clone(),
        }
    }

    /// Collects a rollout with the current policy.
    pub fn rollout(&self) -> Result<RolloutSet> {
        let ctx = RolloutContext {
            env: &self.setup.env,
            scenarios: &self.setup.scenarios,
            seed: self.setup.seed,
            epoch: self.epoch,
            slots: self.setup.train.envs,
            pool: &self.pool,
        };
        collect_rollout(&self.actor, &self.critic, self.setup.train.rollout, &ctx)
    }

    /// One iteration: rollout under the current policy, advantage
    /// estimation, then K Adam steps on `ζ_π + c·ζ_V`. On divergence the
    /// parameters from before the epoch are restored and an error returned.
    pub fn train_epoch(&mut self) -> Result<EpochMetrics> {
        let cfg = self.setup.train;
        let phase = self.phase();
        let rollout = self.rollout()?;
        let adv = compute_gae(&rollout, cfg.gamma, cfg.lambda);
        let saved = (self.actor.clone(), self.critic.clone(), self.actor_opt.clone(), self.critic_opt.clone());

        let mut rng = seeded(derive(self.setup.seed, &[TAG_MINIBATCH]), self.epoch);
        let (mut pl, mut vl, mut clipped) = (0.0, 0.0, 0usize);
        for _ in 0..cfg.steps {
            let idx = rand::seq::index::sample(&mut rng, rollout.len(), cfg.minibatch).into_vec();
            let mut a: Vec<f64> = idx.iter().map(|&i| adv.advantages[i]).collect();
            if cfg.normalize_advantages {
                normalize(&mut a);
            }
            let r: Vec<f64> = idx.iter().map(|&i| adv.returns[i]).collect();
            let g = self.gradients(&rollout, &idx, &a, &r)?;
            self.actor_opt.step(&mut self.actor.params, &g.actor);
            self.critic_opt.step(&mut self.critic.params, &g.critic);
            if !(self.actor.is_finite() && self.critic.is_finite()) {
                (self.actor, self.critic, self.actor_opt, self.critic_opt) = saved;
                return Err(Error::DivergenceDetected { epoch: (self.epoch + 1) as usize });
            }
            pl += g.policy_loss;
            vl += g.value_loss;
            clipped += g.clipped;
        }

        self.epoch += 1;
        let k = cfg.steps as f64;
        let sigma = self.actor.sigma();
        let eps = &rollout.episodes;
        let rate = |t: Termination| {
            if eps.is_empty() {
                0.0
            } else {
                eps.iter().filter(|e| e.termination == t).count() as f64 / eps.len() as f64
            }
        };
        let metrics = EpochMetrics {
            epoch: self.epoch,
            phase: phase.number(),
            episodes: eps.len(),
            mean_reward: if eps.is_empty() { 0.0 } else { eps.iter().map(|e| e.total_reward).sum::<f64>() / eps.len() as f64 },
            success: rate(Termination::Success),
            collision: rate(Termination::Collision),
            timeout: rate(Termination::Timeout),
            overspeed: rate(Termination::Overspeed),
            policy_loss: pl / k,
            value_loss: vl / k,
            clip_fraction: clipped as f64 / (k * cfg.minibatch as f64),
            sigma_accel: sigma[0],
            sigma_steer: sigma[1],
        };
        self.success_history.push(metrics.success);
        self.monitor.push(metrics.mean_reward);
        self.setup.env.reward.phase = self.setup.phases.advance(phase, &self.success_history);
        Ok(metrics)
    }

    /// Minibatch gradients, computed chunk by chunk and summed in order.
    fn gradients(&self, rollout: &RolloutSet, idx: &[usize], adv: &[f64], returns: &[f64]) -> Result<Gradients> {
        let cfg = &self.setup.train;
        let scale = 1.0 / idx.len() as f64;
        let log_std = self.actor.log_std();
        let log_std = [log_std[0], log_std[1]];
        let ls_range = self.actor.log_std_range();
        let starts: Vec<usize> = (0..idx.len()).step_by(CHUNK).collect();
        let parts: Vec<Result<Gradients>> = self.pool.install(|| {
            starts
                .par_iter()
                .map(|&s| {
                    let e = (s + CHUNK).min(idx.len());
                    let ids = &idx[s..e];
                    let batch = rollout.batch(ids);
                    let ca = self.actor.forward(&batch)?;
                    let cc = self.critic.forward(&batch)?;
                    let actions: Vec<[f64; 2]> = ids.iter().map(|&i| rollout.samples[i]).collect();
                    let old: Vec<f64> = ids.iter().map(|&i| rollout.log_probs[i]).collect();
                    let p = policy_loss(&ca.output, log_std, &actions, &old, &adv[s..e], cfg.clip, scale);
                    let mut ga = vec![0.0; self.actor.param_count()];
                    self.actor.backward(&ca, &p.d_mu, &mut ga);
                    for (g, d) in ga[ls_range.clone()].iter_mut().zip(p.d_log_std) {
                        *g += d;
                    }
                    let (v, mut dv) = value_loss(&cc.output, &returns[s..e], scale);
                    for d in &mut dv {
                        *d *= cfg.value_scale;
                    }
                    let mut gc = vec![0.0; self.critic.param_count()];
                    self.critic.backward(&cc, &dv, &mut gc);
                    Ok(Gradients { actor: ga, critic: gc, policy_loss: p.loss, value_loss: v, clipped: p.clipped })
                })
                .collect()
        });
        let mut total: Option<Gradients> = None;
        for part in parts {
            let part = part?;
            match &mut total {
                None => total = Some(part),
                Some(t) => {
                    for (a, b) in t.actor.iter_mut().zip(&part.actor) {
                        *a += b;
                    }
                    for (a, b) in t.critic.iter_mut().zip(&part.critic) {
                        *a += b;
                    }
                    t.policy_loss += part.policy_loss;
                    t.value_loss += part.value_loss;
                    t.clipped += part.clipped;
                }
            }
        }
        Ok(total.expect("non-empty minibatch"))
    }

    /// Trains until convergence or `max_epochs`, writing the training log and
    /// checkpoints into `out_dir` when given. `on_epoch` sees every row.
    pub fn run(&mut self, out_dir: Option<&Path>, mut on_epoch: impl FnMut(&EpochMetrics)) -> Result<RunOutcome> {
        let mut log = match out_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                Some(TrainingLog::open(&dir.join("train_log.csv"), self.epoch > 0)?)
            }
            None => None,
        };
        let every = self.setup.train.checkpoint_every as u64;
        while (self.epoch as usize) < self.setup.train.max_epochs && !self.converged() {
            let before = self.phase();
            let m = match self.train_epoch() {
                Ok(m) => m,
                Err(e @ Error::DivergenceDetected { .. }) => {
                    if let Some(dir) = out_dir {
                        self.checkpoint().save(&dir.join("diverged.ckpt"))?;
                    }
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            if let Some(log) = &mut log {
                log.write(&m)?;
            }
            on_epoch(&m);
            if let Some(dir) = out_dir {
                if (every > 0 && self.epoch % every == 0) || self.phase() != before {
                    self.checkpoint().save(&checkpoint_path(dir, self.epoch))?;
                }
            }
        }
        if let Some(dir) = out_dir {
            self.checkpoint().save(&dir.join("final.ckpt"))?;
        }
        Ok(RunOutcome { epochs: self.epoch, converged: self.converged() })
    }
}

pub fn checkpoint_path(dir: &Path, epoch: u64) -> PathBuf {
    dir.join(format!("epoch-{epoch:04}.ckpt"))
}
