//! Diagonal Gaussian action distribution.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dynamics::Action;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutput {
    /// Mean (accel, steer rate), already scaled to the action bounds.
    pub mu: [f64; 2],
    /// Standard deviations, input-independent.
    pub sigma: [f64; 2],
}

impl PolicyOutput {
    /// The deterministic action.
    pub fn mode(&self) -> Action {
        Action::new(self.mu[0], self.mu[1]).clamped()
    }
}

/// Log-density of `a` under N(μ, diag σ²).
pub fn log_density(mu: &[f64; 2], log_std: &[f64; 2], a: &[f64; 2]) -> f64 {
    (0..2)
        .map(|i| {
            let z = (a[i] - mu[i]) / log_std[i].exp();
            -0.5 * z * z - log_std[i] - LN_SQRT_2PI
        })
        .sum()
}

/// Draws a raw sample and returns it with its log-density. The raw sample is
/// what the optimiser must see; the environment receives it clipped.
pub fn sample_raw<R: Rng>(out: &PolicyOutput, rng: &mut R) -> ([f64; 2], f64) {
    let mut a = [0.0; 2];
    for (i, x) in a.iter_mut().enumerate() {
        let e: f64 = rng.sample(StandardNormal);
        *x = out.mu[i] + out.sigma[i] * e;
    }
    let log_std = [out.sigma[0].ln(), out.sigma[1].ln()];
    (a, log_density(&out.mu, &log_std, &a))
}

/// Samples an action, clipped to the bounds, with the log-density of the
/// unclipped draw.
pub fn sample_action<R: Rng>(out: &PolicyOutput, rng: &mut R) -> (Action, f64) {
    let (a, lp) = sample_raw(out, rng);
    (Action::new(a[0], a[1]).clamped(), lp)
}
