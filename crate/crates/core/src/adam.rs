//! Bias-corrected adaptive-moment parameter updates.

use crate::error::{Error, Result};
use crate::nn::{Mlp, ParamGrads};
use crate::tensor::DenseArray;

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_stab: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps_stab: 1e-8 }
    }
}

/// Optimizer state: one pair of moment arrays per parameter array, in the
/// same layer order as the net.
#[derive(Debug, Clone)]
pub struct AdamState {
    step_count: u64,
    first_moment: Vec<DenseArray>,
    second_moment: Vec<DenseArray>,
    pub config: AdamConfig,
}

impl AdamState {
    /// Fresh zeroed state shaped like `net`'s parameters.
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        let shapes: Vec<Vec<usize>> = net
            .weights()
            .iter()
            .chain(net.biases().iter())
            .map(|p| p.shape().to_vec())
            .collect();
        Self {
            step_count: 0,
            first_moment: shapes.iter().map(|s| DenseArray::zeros(s.clone())).collect(),
            second_moment: shapes.iter().map(|s| DenseArray::zeros(s.clone())).collect(),
            config,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// Applies one bias-corrected moment update to `net` in place and increments
/// the step count. Gradients must shape-match the net and be finite.
pub fn adam_step(net: &mut Mlp, grads: &ParamGrads, state: &mut AdamState) -> Result<()> {
    let n_layers = net.num_layers();
    if grads.weights.len() != n_layers || grads.biases.len() != n_layers {
        return Err(Error::dimension(
            "adam_step layer count",
            &[n_layers],
            &[grads.weights.len(), grads.biases.len()],
        ));
    }
    for (k, (g, p)) in grads.weights.iter().zip(net.weights()).enumerate() {
        check_param(g, p, &format!("layer {k} weights"))?;
    }
    for (k, (g, p)) in grads.biases.iter().zip(net.biases()).enumerate() {
        check_param(g, p, &format!("layer {k} biases"))?;
    }

    let t = state.step_count + 1;
    let AdamConfig { lr, beta1, beta2, eps_stab } = state.config;
    let bias1 = 1.0 - beta1.powi(t as i32);
    let bias2 = 1.0 - beta2.powi(t as i32);

    // Parameter arrays are ordered weights-first then biases, matching the
    // moment arrays laid down in AdamState::new.
    let grad_arrays = grads.weights.iter().chain(grads.biases.iter());
    for (slot, g) in grad_arrays.enumerate() {
        let m = state.first_moment[slot].data_mut();
        let v = state.second_moment[slot].data_mut();
        let params = if slot < n_layers {
            net.weights_mut()[slot].data_mut()
        } else {
            net.biases_mut()[slot - n_layers].data_mut()
        };
        for ((p, &gi), (mi, vi)) in params.iter_mut().zip(g.data()).zip(m.iter_mut().zip(v.iter_mut())) {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            let m_hat = *mi / bias1;
            let v_hat = *vi / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps_stab);
        }
    }
    state.step_count = t;
    Ok(())
}

fn check_param(grad: &DenseArray, param: &DenseArray, what: &str) -> Result<()> {
    if grad.shape() != param.shape() {
        return Err(Error::dimension(format!("adam_step {what}"), param.shape(), grad.shape()));
    }
    if let Some(i) = grad.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("adam_step gradient for {what}, element {i}")));
    }
    Ok(())
}
