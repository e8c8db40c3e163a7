//! AdamW with decoupled weight decay and a warmup + cosine schedule.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
}

#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: AdamWConfig,
    m: Vec<f32>,
    v: Vec<f32>,
    decay: Vec<bool>,
    step: u32,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, decay_mask: Vec<bool>) -> Self {
        let n = decay_mask.len();
        Self { cfg, m: vec![0.0; n], v: vec![0.0; n], decay: decay_mask, step: 0 }
    }

    /// One update at learning rate `lr` (the schedule's value for this step).
    pub fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f32) {
        self.step += 1;
        let AdamWConfig { beta1, beta2, eps, weight_decay, .. } = self.cfg;
        let bc1 = 1.0 - math::pow(beta1, self.step as f32);
        let bc2 = 1.0 - math::pow(beta2, self.step as f32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            if self.decay[i] {
                params[i] -= lr * weight_decay * params[i];
            }
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (math::sqrt(vhat) + eps);
        }
    }

    pub fn steps_taken(&self) -> u32 {
        self.step
    }
}

/// Linear warmup to `base` over `warmup` steps, then cosine decay to zero at
/// `total`.
pub fn warmup_cosine(step: usize, total: usize, warmup: usize, base: f32) -> f32 {
    if step < warmup {
        return base * (step + 1) as f32 / warmup as f32;
    }
    let span = total.saturating_sub(warmup).max(1);
    let progress = ((step - warmup) as f32 / span as f32).min(1.0);
    0.5 * base * (1.0 + math::cos(core::f32::consts::PI * progress))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let (total, warmup) = (300, 20);
        assert!((warmup_cosine(19, total, warmup, 1.0) - 1.0).abs() < 1e-6);
        assert!(warmup_cosine(0, total, warmup, 1.0) < 0.1);
        assert!((warmup_cosine(160, total, warmup, 1.0) - 0.5).abs() < 1e-6);
        assert!(warmup_cosine(299, total, warmup, 1.0) < 1e-3);
        let mut prev = f32::INFINITY;
        for s in warmup..total {
            let lr = warmup_cosine(s, total, warmup, 1.0);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn minimizes_quadratic() {
        let cfg = AdamWConfig { lr: 0.1, beta1: 0.9, beta2: 0.95, eps: 1e-8, weight_decay: 0.0 };
        let mut opt = AdamW::new(cfg, vec![false; 2]);
        let mut p = [3.0f32, -2.0];
        for _ in 0..500 {
            let g = [2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)];
            opt.step(&mut p, &g, 0.05);
        }
        assert!((p[0] - 1.0).abs() < 1e-2 && (p[1] + 0.5).abs() < 1e-2, "{p:?}");
    }

    #[test]
    fn decay_only_masked() {
        let cfg = AdamWConfig { lr: 0.1, beta1: 0.9, beta2: 0.95, eps: 1e-8, weight_decay: 0.5 };
        let mut opt = AdamW::new(cfg, vec![true, false]);
        let mut p = [1.0f32, 1.0];
        opt.step(&mut p, &[0.0, 0.0], 0.1);
        assert!((p[0] - 0.95).abs() < 1e-6);
        assert_eq!(p[1], 1.0);
    }
}
