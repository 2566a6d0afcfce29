//! Adam with a step-decay learning-rate schedule, on flat parameter vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Initial learning rate (pixels per step for velocity parameters).
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    /// Multiplier applied every `decay_every` steps.
    pub decay_factor: f64,
    pub decay_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr0: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            decay_factor: 0.1,
            decay_every: 100,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("optimizer: {what}")));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) || !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta1 and beta2 must lie in (0, 1)");
        }
        if !(self.eps_adam > 0.0) {
            return bad("eps_adam must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad("decay_factor must lie in (0, 1]");
        }
        if self.decay_every == 0 {
            return bad("decay_every must be positive");
        }
        Ok(())
    }
}

/// Learning rate at step `t` (1-based): `lr0 * decay^floor((t - 1) / every)`.
pub fn lr_at(t: u64, cfg: &OptimizerConfig) -> f64 {
    let epochs = t.saturating_sub(1) / cfg.decay_every as u64;
    cfg.lr0 * cfg.decay_factor.powi(epochs.min(i32::MAX as u64) as i32)
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &OptimizerConfig) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::invalid(format!(
                "adam: state has {} entries, params {}, grad {}",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient component {i} at step {}", self.t + 1)));
        }
        self.t += 1;
        let t = self.t;
        let lr = lr_at(t, cfg);
        let c1 = 1.0 - cfg.beta1.powi(t.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - cfg.beta2.powi(t.min(i32::MAX as u64) as i32);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps_adam);
        }
        Ok(())
    }
}
