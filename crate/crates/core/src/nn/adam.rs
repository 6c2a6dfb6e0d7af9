//! Adam with bias correction.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { alpha: 5e-5, beta1: 0.9, beta2: 0.999, eps: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self { config, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    /// `θ ← θ − α·m̂/(√v̂ + ϵ)` with `m̂ = m/(1−β₁ᵗ)`, `v̂ = v/(1−β₂ᵗ)`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        let AdamConfig { alpha, beta1, beta2, eps } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= alpha * mh / (vh.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut opt = Adam::new(AdamConfig::default(), 3);
        let mut p = vec![1.0, -2.0, 0.5];
        opt.step(&mut p, &[0.0; 3]);
        assert_eq!(p, [1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_by_hand() {
        // After bias correction m̂ = g and v̂ = g², so Δ = −α·g/(|g| + ϵ).
        let cfg = AdamConfig::default();
        let mut opt = Adam::new(cfg, 3);
        let g = [0.3, -2.0, 1e-6];
        let mut p = vec![0.0; 3];
        opt.step(&mut p, &g);
        for i in 0..3 {
            let want = -cfg.alpha * g[i] / (g[i].abs() + cfg.eps);
            assert!((p[i] - want).abs() <= 1e-15 * want.abs().max(1e-300), "{} vs {want}", p[i]);
        }
    }

    #[test]
    fn constant_gradient_steps_approach_alpha() {
        let cfg = AdamConfig::default();
        let mut opt = Adam::new(cfg, 2);
        let mut p = vec![0.0; 2];
        for _ in 0..5000 {
            let last = p.clone();
            opt.step(&mut p, &[0.7, -3.0]);
            assert!(p[0] < last[0] && p[1] > last[1]);
        }
        // Fixed point: m̂ → g, v̂ → g², |Δ| → α·|g|/(|g| + ϵ).
        let mut q = p.clone();
        opt.step(&mut q, &[0.7, -3.0]);
        assert!(((p[0] - q[0]) - cfg.alpha * 0.7 / (0.7 + cfg.eps)).abs() < 1e-12);
        assert!(((q[1] - p[1]) - cfg.alpha * 3.0 / (3.0 + cfg.eps)).abs() < 1e-12);
    }
}
