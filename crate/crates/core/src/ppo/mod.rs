//! Proximal policy optimisation: rollouts, advantage estimation, the
//! clipped surrogate objective and the epoch loop.

mod gae;
mod log;
mod loss;
mod rollout;
mod trainer;

pub use gae::{compute_gae, segment_advantages, Advantages};
pub use log::{ConvergenceMonitor, EpochMetrics, TrainingLog};
pub use loss::{is_clipped, normalize, policy_loss, surrogate, surrogate_grad, value_loss, PolicyLoss};
pub use rollout::{collect_rollout, EpisodeSummary, RolloutContext, RolloutSet, Segment};
pub use trainer::{checkpoint_path, RunOutcome, TrainSetup, Trainer};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, Batch, Network};

/// Samples per forward/backward chunk. Work is always split at these fixed
/// boundaries and reduced in chunk order, whatever the thread count.
pub const CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub lambda: f64,
    /// Clip parameter ε.
    pub clip: f64,
    /// Weight of the value loss.
    pub value_scale: f64,
    /// Optimisation steps per epoch (K).
    pub steps: usize,
    /// Minibatch size (M).
    pub minibatch: usize,
    /// Rollout size (N).
    pub rollout: usize,
    pub max_epochs: usize,
    pub adam: AdamConfig,
    pub normalize_advantages: bool,
    /// Lockstep environment slots during rollouts.
    pub envs: usize,
    /// Checkpoint interval in epochs (E).
    pub checkpoint_every: usize,
    /// Moving-average window of the convergence test.
    pub convergence_window: usize,
    /// Relative improvement below which a check counts as stalled.
    pub convergence_tolerance: f64,
    /// Consecutive stalled checks that end training.
    pub convergence_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.1,
            value_scale: 0.1,
            steps: 16,
            minibatch: 1024,
            rollout: 16_384,
            max_epochs: 350,
            adam: AdamConfig::default(),
            normalize_advantages: true,
            envs: 16,
            checkpoint_every: 10,
            convergence_window: 20,
            convergence_tolerance: 0.005,
            convergence_patience: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("lambda must lie in (0, 1]");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if !(self.value_scale >= 0.0) {
            return bad("value_scale must be non-negative");
        }
        if self.steps == 0 || self.minibatch == 0 || self.rollout == 0 || self.envs == 0 {
            return bad("steps, minibatch, rollout and envs must be positive");
        }
        if self.minibatch > self.rollout {
            return bad("minibatch must not exceed rollout");
        }
        let a = &self.adam;
        if !(a.alpha > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return bad("invalid Adam hyperparameters");
        }
        if self.convergence_window == 0 || self.convergence_patience == 0 {
            return bad("convergence window and patience must be positive");
        }
        Ok(())
    }
}

/// Network outputs for a batch, computed in [`CHUNK`]-sized pieces.
pub fn forward_batched(net: &Network, batch: &Batch, pool: &rayon::ThreadPool) -> Result<Vec<f64>> {
    let sd = batch.states.len() / batch.len.max(1);
    let gl = batch.grids.len() / batch.len.max(1);
    let starts: Vec<usize> = (0..batch.len).step_by(CHUNK).collect();
    let parts: Vec<Result<Vec<f64>>> = pool.install(|| {
        starts
            .par_iter()
            .map(|&s| {
                let e = (s + CHUNK).min(batch.len);
                let sub = Batch {
                    len: e - s,
                    states: batch.states[s * sd..e * sd].to_vec(),
                    grids: batch.grids[s * gl..e * gl].to_vec(),
                };
                net.forward(&sub).map(|c| c.output)
            })
            .collect()
    });
    let mut out = Vec::new();
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
