//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8, weight_decay: 0.05 }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, b) in [("adamw.beta1", self.beta1), ("adamw.beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::config(field, "must lie in (0, 1)"));
            }
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::config("adamw.epsilon", "must be positive"));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::config("adamw.weight_decay", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Scalar> OptimState<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        let zeros: Vec<Vec<T>> = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
        Self { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One update of every parameter. `decay[i]` selects whether parameter `i`
/// receives weight decay.
pub fn adamw_step<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    decay: &[bool],
    state: &mut OptimState<T>,
    lr: f64,
    cfg: &AdamWConfig,
) -> Result<()> {
    if grads.len() != params.len() || decay.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::shape(format!(
            "{} parameters, {} gradients, {} decay flags",
            params.len(),
            grads.len(),
            decay.len()
        )));
    }
    if let Some((p, g)) = params.iter().zip(grads).find(|(p, g)| p.shape() != g.shape()) {
        return Err(Error::shape(format!("parameter {:?} vs gradient {:?}", p.shape(), g.shape())));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (one_b1, one_b2) = (T::lit(1.0 - cfg.beta1), T::lit(1.0 - cfg.beta2));
    let c1 = T::lit(1.0 - cfg.beta1.powi(t));
    let c2 = T::lit(1.0 - cfg.beta2.powi(t));
    let (lr, eps) = (T::lit(lr), T::lit(cfg.epsilon));
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let wd = if decay[i] { T::lit(cfg.weight_decay) } else { T::zero() };
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, (theta, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[j] = b1 * m[j] + one_b1 * gj;
            v[j] = b2 * v[j] + one_b2 * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *theta -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * *theta);
        }
    }
    Ok(())
}
