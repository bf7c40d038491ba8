use super::Tensor;
use crate::error::{Error, Result};

/// Adam hyperparameters. Defaults follow the pix2pix lineage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one parameter list.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[Tensor], config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }
}

/// One bias-corrected Adam update of `params` from their accumulated grads.
/// Parameters without a gradient are treated as having a zero gradient.
pub fn adam_step(params: &[Tensor], state: &mut AdamState) -> Result<()> {
    if params.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "adam_step: {} parameters but state tracks {}",
            params.len(),
            state.m.len()
        )));
    }
    for (p, m) in params.iter().zip(&state.m) {
        if p.numel() != m.len() {
            return Err(Error::Dimension(format!(
                "adam_step: parameter of shape {} does not match its moment buffer ({} values)",
                p.shape(),
                m.len()
            )));
        }
    }
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for ((p, m), v) in params.iter().zip(state.m.iter_mut()).zip(state.v.iter_mut()) {
        let Some(g) = p.grad() else {
            // zero gradient: moments decay, parameter still moves by the decayed momentum
            m.iter_mut().for_each(|x| *x *= beta1);
            v.iter_mut().for_each(|x| *x *= beta2);
            p.update_data(|d| {
                for ((w, mi), vi) in d.iter_mut().zip(m.iter()).zip(v.iter()) {
                    *w -= lr * (mi / c1) / ((vi / c2).sqrt() + eps);
                }
            });
            continue;
        };
        p.update_data(|d| {
            for (((w, gi), mi), vi) in d.iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
            }
        });
    }
    Ok(())
}
