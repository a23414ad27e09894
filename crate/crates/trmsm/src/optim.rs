//! AdamW with decoupled weight decay, a plain Adam for comparison, the
//! warmup/linear-decay learning-rate schedule, and optional gradient
//! clipping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub peak_lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub eval_every: usize,
    /// Periodic checkpoint interval; these are the resumable snapshots.
    pub checkpoint_every: Option<usize>,
    pub clip_norm: Option<f64>,
    /// Dev metric used for model selection (weighted_f1, m_f1, accuracy).
    pub select_metric: String,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            total_steps: 10000,
            warmup_steps: 1000,
            peak_lr: 1e-5,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            eval_every: 500,
            checkpoint_every: None,
            clip_norm: None,
            select_metric: "weighted_f1".into(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps >= self.total_steps {
            return Err(Error::Config(format!(
                "warmup_steps ({}) must be below total_steps ({})",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.peak_lr <= 0.0 {
            return Err(Error::Config("peak_lr must be positive".into()));
        }
        Ok(())
    }

    /// Linear warmup to `peak_lr` at `warmup_steps`, then linear decay to
    /// zero at `total_steps`.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step <= self.warmup_steps {
            self.peak_lr * step as f64 / self.warmup_steps as f64
        } else {
            self.peak_lr * (self.total_steps - step) as f64
                / (self.total_steps - self.warmup_steps) as f64
        }
    }
}

/// First and second moment buffers, keyed by parameter name.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub t: u64,
    pub m: BTreeMap<String, Vec<f64>>,
    pub v: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new() -> AdamState {
        AdamState::default()
    }
}

fn adaptive_update(
    params: &ParamStore,
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
    weight_decay: f64,
) {
    state.t += 1;
    let t = state.t as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    for (name, p) in params.iter() {
        if !p.trainable {
            continue;
        }
        let grad = match p.tensor.grad() {
            Some(g) => g,
            None => continue,
        };
        let n = grad.len();
        let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        let v = state.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        let mut data = p.tensor.data();
        let decay = if p.decay { weight_decay } else { 0.0 };
        for i in 0..n {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            let old = data[i];
            data[i] = old - lr * m_hat / (v_hat.sqrt() + cfg.eps) - lr * decay * old;
        }
        p.tensor.set_data(&data);
    }
}

/// One AdamW step: bias-corrected moments plus decoupled weight decay,
/// applied to decay-eligible parameters only.
pub fn adamw_step(params: &ParamStore, state: &mut AdamState, lr: f64, cfg: &TrainConfig) {
    adaptive_update(params, state, lr, cfg, cfg.weight_decay);
}

/// Plain Adam (no weight decay).
pub fn adam_step(params: &ParamStore, state: &mut AdamState, lr: f64, cfg: &TrainConfig) {
    adaptive_update(params, state, lr, cfg, 0.0);
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
pub fn clip_grad_norm(params: &ParamStore, max_norm: f64) {
    let mut sq = 0.0;
    for (_, p) in params.iter() {
        if let Some(g) = p.tensor.grad() {
            sq += g.iter().map(|x| x * x).sum::<f64>();
        }
    }
    let norm = sq.sqrt();
    if norm <= max_norm || norm == 0.0 {
        return;
    }
    let scale = max_norm / norm;
    for (_, p) in params.iter() {
        if let Some(g) = p.tensor.grad() {
            let scaled: Vec<f64> = g.iter().map(|x| x * scale).collect();
            p.tensor.set_grad(&scaled);
        }
    }
}
