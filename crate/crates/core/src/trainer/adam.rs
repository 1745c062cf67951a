//! Adam with bias correction, applied in the canonical parameter order.

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// First/second moment buffers, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams<f32>) -> Self {
        let m: Vec<Vec<f32>> = params.flat().iter().map(|t| vec![0.0; t.len()]).collect();
        AdamState {
            v: m.clone(),
            m,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, idx: usize) -> (&[f32], &[f32]) {
        (&self.m[idx], &self.v[idx])
    }
}

/// One coordinate-wise Adam update on a flat buffer.
pub fn adam_update(
    data: &mut [f32],
    grad: &[f32],
    m: &mut [f32],
    v: &mut [f32],
    step: u64,
    cfg: &TrainConfig,
) {
    let lr = cfg.learning_rate;
    let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.epsilon);
    let bias1 = 1.0 - b1.powi(step as i32);
    let bias2 = 1.0 - b2.powi(step as i32);
    for i in 0..data.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Applies one Adam step using the gradients stored on the parameters.
pub fn adam_step(
    params: &mut ModelParams<f32>,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let tensors = params.flat_mut();
    if tensors.len() != state.m.len() {
        return Err(Error::Contract(format!(
            "optimizer state holds {} tensors, model has {}",
            state.m.len(),
            tensors.len()
        )));
    }
    state.step += 1;
    for (idx, tensor) in tensors.into_iter().enumerate() {
        let n = tensor.len();
        if state.m[idx].len() != n {
            return Err(Error::Contract(format!(
                "optimizer state tensor #{idx} has {} values, parameter has {n}",
                state.m[idx].len()
            )));
        }
        let grad = tensor
            .grad()
            .ok_or_else(|| Error::Contract(format!("parameter #{idx} has no gradient buffer")))?
            .to_vec();
        adam_update(
            tensor.data_mut(),
            &grad,
            &mut state.m[idx],
            &mut state.v[idx],
            state.step,
            cfg,
        );
    }
    Ok(())
}
