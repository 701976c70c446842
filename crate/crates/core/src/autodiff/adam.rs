//! Adam optimizer with bias correction.

use serde::{Deserialize, Serialize};

use super::{ParamStore, Result, TensorError};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    cfg: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig, params: &ParamStore) -> Self {
        let sizes: Vec<usize> = params.iter().map(|(_, t)| t.values().len()).collect();
        AdamState {
            cfg,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One update from the gradients currently accumulated on `params`.
///
/// `m` and `v` are updated in place and the bias-corrected step
/// `lr * m_hat / (sqrt(v_hat) + eps)` is subtracted from each value.
/// Gradients are left untouched; the caller zeroes them per batch.
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(TensorError::Invalid(format!(
            "optimizer state covers {} tensors but the store holds {}",
            state.m.len(),
            params.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c = state.cfg;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    for (id, tensor) in params.tensors_mut().iter_mut().enumerate() {
        if !tensor.requires_grad() {
            continue;
        }
        let grad: Vec<f64> = match tensor.grad() {
            Some(g) => g.iter().map(|&x| x as f64).collect(),
            None => continue,
        };
        if grad.len() != state.m[id].len() {
            return Err(TensorError::Invalid(format!(
                "optimizer state size {} does not match tensor {} size {}",
                state.m[id].len(),
                id,
                grad.len()
            )));
        }
        let (m, v) = (&mut state.m[id], &mut state.v[id]);
        let values = tensor.values_mut();
        for i in 0..grad.len() {
            let g = grad[i];
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            values[i] -= (c.lr * m_hat / (v_hat.sqrt() + c.eps)) as f32;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use approx::assert_relative_eq;

    fn store_with(values: Vec<f32>) -> ParamStore {
        let mut s = ParamStore::new();
        let n = values.len();
        s.insert("w", Tensor::param(vec![n], values).unwrap()).unwrap();
        s
    }

    #[test]
    fn first_step_with_unit_gradient_matches_hand_value() {
        // m_hat = v_hat = 1 after one step, so the update is lr / (1 + eps).
        let mut params = store_with(vec![0.0]);
        params.get_mut(0).accumulate_grad(&[1.0]).unwrap();
        let mut state = AdamState::new(AdamConfig::default(), &params);
        adam_step(&mut params, &mut state).unwrap();
        let expect = -(1e-3 / (1.0 + 1e-8)) as f32;
        assert_relative_eq!(params.get(0).values()[0], expect, epsilon = 1e-12);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn two_steps_match_scalar_reference() {
        // Hand-rolled scalar Adam on g = [1.0, 0.5].
        let mut params = store_with(vec![0.3]);
        let mut state = AdamState::new(AdamConfig::default(), &params);
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut x = 0.3f64;
        for (step, g) in [1.0f64, 0.5].into_iter().enumerate() {
            params.get_mut(0).zero_grad();
            params.get_mut(0).accumulate_grad(&[g]).unwrap();
            adam_step(&mut params, &mut state).unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let t = (step + 1) as i32;
            let m_hat = m / (1.0 - 0.9f64.powi(t));
            let v_hat = v / (1.0 - 0.999f64.powi(t));
            x -= 1e-3 * m_hat / (v_hat.sqrt() + 1e-8);
        }
        assert_relative_eq!(params.get(0).values()[0] as f64, x, epsilon = 1e-7);
    }

    #[test]
    fn descends_a_quadratic() {
        // min (x - 3)^2 from x = 0; a few hundred steps should get close.
        let mut params = store_with(vec![0.0]);
        let mut state = AdamState::new(AdamConfig { lr: 0.05, ..AdamConfig::default() }, &params);
        for _ in 0..400 {
            let x = params.get(0).values()[0] as f64;
            params.get_mut(0).zero_grad();
            params.get_mut(0).accumulate_grad(&[2.0 * (x - 3.0)]).unwrap();
            adam_step(&mut params, &mut state).unwrap();
        }
        assert_relative_eq!(params.get(0).values()[0] as f64, 3.0, epsilon = 0.05);
    }
}
