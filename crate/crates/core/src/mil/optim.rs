use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Cosine decay from `peak` at step 0 to 0 at `total_steps`, no warmup.
pub fn cosine_lr(step: usize, total_steps: usize, peak: f64) -> f64 {
    if total_steps == 0 {
        return peak;
    }
    let frac = step.min(total_steps) as f64 / total_steps as f64;
    peak * 0.5 * (1.0 + (PI * frac).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First/second moment estimates for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One AdamW update in place: bias-corrected moments plus decoupled decay,
/// `theta -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)`.
pub fn adamw_step(
    theta: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamWConfig,
) {
    assert_eq!(
        theta.len(),
        grad.len(),
        "parameter/gradient length mismatch"
    );
    assert_eq!(
        theta.len(),
        state.m.len(),
        "optimizer state length mismatch"
    );
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powf(state.t as f64);
    let bc2 = 1.0 - cfg.beta2.powf(state.t as f64);
    for k in 0..theta.len() {
        let g = grad[k];
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[k] / bc1;
        let v_hat = state.v[k] / bc2;
        theta[k] -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * theta[k]);
    }
}
