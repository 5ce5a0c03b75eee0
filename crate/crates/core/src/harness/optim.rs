use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter tensor, plus the step count.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

/// One bias-corrected Adam update. Returns fresh trainable leaves; the
/// inputs are left untouched.
pub fn adam_step(
    params: &[Tensor],
    grads: &[Vec<f64>],
    state: &mut AdamState,
    lr: f64,
    cfg: AdamConfig,
) -> Result<Vec<Tensor>> {
    if params.len() != grads.len() {
        return Err(Error::Shape(format!(
            "{} parameters, {} gradients",
            params.len(),
            grads.len()
        )));
    }
    if state.t == 0 && state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() {
        return Err(Error::Shape(
            "optimizer state does not match parameters".into(),
        ));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.numel() != g.len() || p.numel() != m.len() {
            return Err(Error::Shape(format!(
                "parameter {:?} with gradient of {} elements",
                p.shape(),
                g.len()
            )));
        }
    }
    state.t += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let c2 = 1.0 - cfg.beta2.powi(state.t as i32);
    let mut out = Vec::with_capacity(params.len());
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let mut data = p.to_vec();
        for k in 0..data.len() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            data[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + cfg.eps);
        }
        out.push(Tensor::param(data, p.shape())?);
    }
    Ok(out)
}

/// Cosine annealing from `lr_max` at epoch 0 to `lr_min` at the last epoch.
pub fn cosine_lr(epoch: usize, total_epochs: usize, lr_max: f64, lr_min: f64) -> f64 {
    if total_epochs < 2 {
        return lr_max;
    }
    let phase = std::f64::consts::PI * epoch as f64 / (total_epochs - 1) as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + phase.cos())
}
