//! Generalized advantage estimation.

use super::rollout::RolloutSet;

/// Advantages for one episode segment by the backward recursion
/// `Â_t = δ_t + γλ·Â_{t+1}`, with `δ_t = r_{t+1} + γ·V(s_{t+1}) − V(s_t)`.
///
/// `last_value` is `V(s_T)` after the final step: zero when the episode
/// terminated, the bootstrap estimate when it was cut off.
pub fn segment_advantages(rewards: &[f64], values: &[f64], last_value: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), values.len());
    let mut adv = vec![0.0; rewards.len()];
    let mut next_adv = 0.0;
    let mut next_value = last_value;
    for t in (0..rewards.len()).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    adv
}

#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    pub advantages: Vec<f64>,
    /// `R_t = Â_t + V(s_t)`, the value-function target.
    pub returns: Vec<f64>,
}

/// Advantages and returns for a whole rollout, segment by segment.
pub fn compute_gae(rollout: &RolloutSet, gamma: f64, lambda: f64) -> Advantages {
    let mut advantages = vec![0.0; rollout.len()];
    for seg in &rollout.segments {
        let r = seg.start..seg.start + seg.len;
        let last = if seg.terminal { 0.0 } else { seg.bootstrap };
        let a = segment_advantages(&rollout.rewards[r.clone()], &rollout.values[r.clone()], last, gamma, lambda);
        advantages[r].copy_from_slice(&a);
    }
    let returns = advantages.iter().zip(&rollout.values).map(|(a, v)| a + v).collect();
    Advantages { advantages, returns }
}
