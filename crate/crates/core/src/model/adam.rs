use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new<P: Parameters>(params: &P) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        AdamState {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of `params` along `grads`.
pub fn adam_step<P: Parameters>(
    params: &mut P,
    state: &mut AdamState,
    grads: &P,
    config: &AdamConfig,
) -> Result<()> {
    let grads = grads.tensors();
    let mut tensors = params.tensors_mut();
    if tensors.len() != grads.len() || tensors.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "{} parameter tensors, {} gradient tensors, {} optimizer buffers",
            tensors.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (k, (t, g)) in tensors.iter().zip(&grads).enumerate() {
        if t.len() != g.len() || t.len() != state.m[k].len() {
            return Err(Error::Shape(format!(
                "tensor {k}: {} parameters vs {} gradients",
                t.len(),
                g.len()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for (k, (theta, g)) in tensors.iter_mut().zip(&grads).enumerate() {
        let m = &mut state.m[k];
        let v = &mut state.v[k];
        for j in 0..theta.len() {
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            theta[j] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}
