//! The deployed controller: a DRIVER and a STOPPER policy behind a mode rule.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dynamics::{Action, STEER_MAX};
use crate::env::Observation;
use crate::error::{Error, Result};
use crate::nn::{Batch, Head, Network};

/// Horizon over which the commanded steering rate is integrated into a
/// desired steering angle.
pub const STEER_HORIZON: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Driver,
    Stopper,
}

impl Mode {
    /// STOPPER exactly when the requested target speed is zero.
    pub fn select(obs: &Observation) -> Mode {
        if obs.state[3] == 0.0 {
            Mode::Stopper
        } else {
            Mode::Driver
        }
    }
}

/// `β + ω·STEER_HORIZON`, saturated at the steering limit.
pub fn desired_steer(steer: f64, steer_rate: f64) -> f64 {
    (steer + steer_rate * STEER_HORIZON).clamp(-STEER_MAX, STEER_MAX)
}

/// Deterministic control for a batch of observations using the policy means.
pub trait Policy: Sync {
    fn act(&self, obs: &[Observation]) -> Result<Vec<Action>>;
}

impl Policy for Network {
    fn act(&self, obs: &[Observation]) -> Result<Vec<Action>> {
        let cache = self.forward(&Batch::from_observations(obs))?;
        Ok(cache.output.chunks_exact(2).map(|m| Action::new(m[0], m[1]).clamped()).collect())
    }
}

/// One control decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Control {
    pub mode: Mode,
    pub action: Action,
    /// Steering angle to hand to the low-level controller.
    pub steer_des: f64,
    /// Wall-clock time spent inside the call.
    pub latency: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepController {
    driver: Network,
    stopper: Network,
}

fn check_policy(net: &Network, which: &str) -> Result<()> {
    match &net.topology().head {
        Head::Policy { bounds, .. } if bounds.len() == 2 => Ok(()),
        _ => Err(Error::ConfigInvalid(format!("{which} checkpoint does not hold a two-action policy"))),
    }
}

impl DeepController {
    pub fn new(driver: Network, stopper: Network) -> Result<Self> {
        check_policy(&driver, "driver")?;
        check_policy(&stopper, "stopper")?;
        let (d, s) = (driver.topology(), stopper.topology());
        if (d.state_dim, d.grid_rows, d.grid_cols) != (s.state_dim, s.grid_rows, s.grid_cols) {
            return Err(Error::ShapeMismatch("driver and stopper observe different inputs".into()));
        }
        Ok(Self { driver, stopper })
    }

    pub fn policy(&self, mode: Mode) -> &Network {
        match mode {
            Mode::Driver => &self.driver,
            Mode::Stopper => &self.stopper,
        }
    }

    pub fn control(&self, obs: &Observation) -> Result<Control> {
        let start = Instant::now();
        let mode = Mode::select(obs);
        let action = self.policy(mode).policy(obs)?.mode();
        let steer_des = desired_steer(obs.steer(), action.steer_rate);
        Ok(Control { mode, action, steer_des, latency: start.elapsed() })
    }
}

impl Policy for DeepController {
    fn act(&self, obs: &[Observation]) -> Result<Vec<Action>> {
        let mut out = vec![Action::ZERO; obs.len()];
        for mode in [Mode::Driver, Mode::Stopper] {
            let idx: Vec<usize> = (0..obs.len()).filter(|&i| Mode::select(&obs[i]) == mode).collect();
            if idx.is_empty() {
                continue;
            }
            let sub: Vec<Observation> = idx.iter().map(|&i| obs[i].clone()).collect();
            for (i, a) in idx.into_iter().zip(self.policy(mode).act(&sub)?) {
                out[i] = a;
            }
        }
        Ok(out)
    }
}

/// Summary of per-call latencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub calls: usize,
    pub mean_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(samples: &[Duration]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        ms.sort_by(f64::total_cmp);
        let p99 = ms[((ms.len() as f64 * 0.99).ceil() as usize).clamp(1, ms.len()) - 1];
        Some(Self {
            calls: ms.len(),
            mean_ms: ms.iter().sum::<f64>() / ms.len() as f64,
            p99_ms: p99,
            max_ms: ms[ms.len() - 1],
        })
    }
}
