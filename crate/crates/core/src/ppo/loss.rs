//! Clipped surrogate and value losses with their gradients.

use crate::nn::log_density;

/// One sample's clipped objective `min(ξ·Â, clip(ξ, 1−ε, 1+ε)·Â)`.
pub fn surrogate(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Whether the clipped branch is the active (and flat) one.
pub fn is_clipped(ratio: f64, adv: f64, eps: f64) -> bool {
    (adv > 0.0 && ratio > 1.0 + eps) || (adv < 0.0 && ratio < 1.0 - eps)
}

/// `∂surrogate/∂ξ`: `Â` on the unclipped branch, exactly 0 on the clipped one.
pub fn surrogate_grad(ratio: f64, adv: f64, eps: f64) -> f64 {
    if is_clipped(ratio, adv, eps) {
        0.0
    } else {
        adv
    }
}

/// Policy loss contribution of a set of samples and its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyLoss {
    /// `−scale·Σ surrogate`.
    pub loss: f64,
    /// Gradient with respect to μ, `[n × 2]`.
    pub d_mu: Vec<f64>,
    pub d_log_std: [f64; 2],
    /// Number of samples on the clipped branch.
    pub clipped: usize,
}

/// Evaluates `−scale·Σ min(ξÂ, clip(ξ)Â)` with `ξ = exp(log π(a) − log π₀(a))`.
///
/// Pass `scale = 1/M` so that per-chunk results over a minibatch of size M
/// add up to the mean.
pub fn policy_loss(
    mu: &[f64],
    log_std: [f64; 2],
    actions: &[[f64; 2]],
    old_log_prob: &[f64],
    adv: &[f64],
    eps: f64,
    scale: f64,
) -> PolicyLoss {
    let n = actions.len();
    assert_eq!(mu.len(), 2 * n);
    let inv_var = [(-2.0 * log_std[0]).exp(), (-2.0 * log_std[1]).exp()];
    let mut out = PolicyLoss { loss: 0.0, d_mu: vec![0.0; 2 * n], d_log_std: [0.0; 2], clipped: 0 };
    for i in 0..n {
        let m = [mu[2 * i], mu[2 * i + 1]];
        let lp = log_density(&m, &log_std, &actions[i]);
        let ratio = (lp - old_log_prob[i]).exp();
        out.loss -= scale * surrogate(ratio, adv[i], eps);
        if is_clipped(ratio, adv[i], eps) {
            out.clipped += 1;
            continue;
        }
        // ∂loss/∂log π = −scale·Â·ξ.
        let g = -scale * adv[i] * ratio;
        for d in 0..2 {
            let diff = actions[i][d] - m[d];
            out.d_mu[2 * i + d] = g * diff * inv_var[d];
            out.d_log_std[d] += g * (diff * diff * inv_var[d] - 1.0);
        }
    }
    out
}

/// `scale·Σ (V − R)²` and its gradient with respect to V.
pub fn value_loss(values: &[f64], returns: &[f64], scale: f64) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let grad = values
        .iter()
        .zip(returns)
        .map(|(v, r)| {
            let e = v - r;
            loss += scale * e * e;
            2.0 * scale * e
        })
        .collect();
    (loss, grad)
}

/// Zero-mean, unit-variance advantages (population variance, `1e-8` guard).
pub fn normalize(adv: &mut [f64]) {
    let n = adv.len() as f64;
    if adv.is_empty() {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let sd = var.sqrt() + 1e-8;
    for a in adv {
        *a = (*a - mean) / sd;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_example() {
        assert!((surrogate(1.3, 2.0, 0.1) - 2.2).abs() < 1e-15);
        assert_eq!(surrogate_grad(1.3, 2.0, 0.1), 0.0);
        // Finite difference on ξ agrees: the clipped branch is flat.
        let h = 1e-6;
        assert_eq!((surrogate(1.3 + h, 2.0, 0.1) - surrogate(1.3 - h, 2.0, 0.1)) / (2.0 * h), 0.0);
        // Inside the band the term is linear in ξ.
        assert_eq!(surrogate_grad(1.05, 2.0, 0.1), 2.0);
        // Below the band with positive advantage the unclipped term is smaller.
        assert_eq!(surrogate(0.5, 2.0, 0.1), 1.0);
        assert_eq!(surrogate_grad(0.5, 2.0, 0.1), 2.0);
    }

    #[test]
    fn unit_ratio_gives_negative_mean_advantage() {
        let mu = [0.1, -0.2, 0.3, 0.0];
        let ls = [-0.7, -0.5];
        let actions = [[0.2, 0.1], [0.0, 0.5]];
        let old: Vec<f64> = actions
            .iter()
            .enumerate()
            .map(|(i, a)| log_density(&[mu[2 * i], mu[2 * i + 1]], &ls, a))
            .collect();
        let adv = [1.5, -0.5];
        let pl = policy_loss(&mu, ls, &actions, &old, &adv, 0.1, 0.5);
        assert!((pl.loss + 0.5).abs() < 1e-15);
        assert_eq!(pl.clipped, 0);
    }

    #[test]
    fn value_loss_examples() {
        let (l, g) = value_loss(&[1.0, 2.0], &[1.0, 2.0], 0.5);
        assert_eq!((l, g), (0.0, vec![0.0, 0.0]));
        let (l, _) = value_loss(&[3.0, 1.5, -2.0], &[1.0, -0.5, -4.0], 1.0 / 3.0);
        assert!((l - 4.0).abs() < 1e-15);
    }

    #[test]
    fn policy_gradients_match_finite_differences() {
        let mu = vec![0.1, -0.2, 0.3, 0.05, -0.6, 0.9];
        let ls = [-0.7, -0.4];
        let actions = [[0.2, 0.1], [0.0, 0.5], [-0.3, 0.7]];
        let old = [-0.4, 0.2, 0.1];
        let adv = [1.5, -0.5, 0.8];
        let eps = 0.1;
        let pl = policy_loss(&mu, ls, &actions, &old, &adv, eps, 1.0 / 3.0);
        let f = |mu: &[f64], ls: [f64; 2]| policy_loss(mu, ls, &actions, &old, &adv, eps, 1.0 / 3.0).loss;
        let h = 1e-6;
        for i in 0..mu.len() {
            let (mut up, mut down) = (mu.clone(), mu.clone());
            up[i] += h;
            down[i] -= h;
            let num = (f(&up, ls) - f(&down, ls)) / (2.0 * h);
            assert!((num - pl.d_mu[i]).abs() < 1e-8, "mu {i}: {num} vs {}", pl.d_mu[i]);
        }
        for d in 0..2 {
            let (mut up, mut down) = (ls, ls);
            up[d] += h;
            down[d] -= h;
            let num = (f(&mu, up) - f(&mu, down)) / (2.0 * h);
            assert!((num - pl.d_log_std[d]).abs() < 1e-8);
        }
    }

    #[test]
    fn normalized_advantages() {
        let mut a = vec![1.0, 2.0, 3.0, 6.0];
        normalize(&mut a);
        let mean: f64 = a.iter().sum::<f64>() / 4.0;
        let var: f64 = a.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-15 && (var - 1.0).abs() < 1e-7);
    }

    proptest! {
        #[test]
        fn clip_is_pessimistic(ratio in 0.0f64..3.0, adv in -5.0f64..5.0, eps in 0.01f64..0.5) {
            prop_assert!(surrogate(ratio, adv, eps) <= ratio * adv);
        }
    }
}
