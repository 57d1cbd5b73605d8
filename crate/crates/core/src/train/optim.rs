use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParameters;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moments, one vector per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    pub lr: f64,
}

impl OptimizerState {
    pub fn new(params: &ModelParameters, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors.values().map(|t| vec![0.0; t.numel()]).collect();
        OptimizerState { m: zeros.clone(), v: zeros, step: 0, lr }
    }
}

fn check_grads(params: &ModelParameters, grads: &[Vec<f64>]) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::Mismatch(format!("{} gradients for {} parameters", grads.len(), params.len())));
    }
    for ((name, t), g) in params.tensors.iter().zip(grads) {
        if g.len() != t.numel() {
            return Err(Error::Mismatch(format!("gradient for {name} has {} values, expected {}", g.len(), t.numel())));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: format!("gradient of {name} at index {i}") });
        }
    }
    Ok(())
}

/// One bias-corrected Adam update at the state's current learning rate.
pub fn adam_step(
    params: &mut ModelParameters,
    grads: &[Vec<f64>],
    opt: &mut OptimizerState,
    cfg: &AdamConfig,
) -> Result<()> {
    check_grads(params, grads)?;
    opt.step += 1;
    let t = opt.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, tensor) in params.tensors.values_mut().enumerate() {
        let (m, v, g) = (&mut opt.m[i], &mut opt.v[i], &grads[i]);
        for (j, p) in tensor.data_mut().iter_mut().enumerate() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *p -= opt.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

pub fn global_norm(grads: &[Vec<f64>]) -> f64 {
    grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescale so the global L2 norm is at most `max_norm`. Returns the norm
/// before and after.
pub fn clip_grad_norm(grads: &mut [Vec<f64>], max_norm: f64) -> (f64, f64) {
    let norm = global_norm(grads);
    if norm > max_norm {
        let k = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= k);
        (norm, global_norm(grads))
    } else {
        (norm, norm)
    }
}

/// Decay `lr` by `factor` when the latest validation loss did not improve
/// on the previous one.
pub fn lr_plateau_decay(history: &[f64], lr: f64, factor: f64) -> f64 {
    match history {
        [.., prev, last] if last >= prev => lr * factor,
        _ => lr,
    }
}

/// Elementwise mean of parameter sets with identical names and shapes.
pub fn average_parameters(sets: &[ModelParameters]) -> Result<ModelParameters> {
    let first = sets.first().ok_or(Error::Empty("checkpoint list"))?;
    let mut out = first.clone();
    for (k, other) in sets.iter().enumerate().skip(1) {
        if other.tensors.len() != first.tensors.len() {
            return Err(Error::Mismatch(format!("checkpoint {k} has {} tensors, expected {}", other.len(), first.len())));
        }
        for (name, acc) in out.tensors.iter_mut() {
            let t = other
                .tensors
                .get(name)
                .ok_or_else(|| Error::Mismatch(format!("checkpoint {k} lacks {name}")))?;
            if t.shape() != acc.shape() {
                return Err(Error::Mismatch(format!(
                    "checkpoint {k}: {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    acc.shape()
                )));
            }
            acc.data_mut().iter_mut().zip(t.data()).for_each(|(a, b)| *a += b);
        }
    }
    let n = sets.len() as f64;
    for t in out.tensors.values_mut() {
        t.data_mut().iter_mut().for_each(|a| *a /= n);
    }
    Ok(out)
}
