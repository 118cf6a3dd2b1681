//! Adam with bias correction. The update always descends; callers wanting
//! ascent negate the gradients.

use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter first/second moments and the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub params: AdamParams,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    /// Fresh state with zero moments shaped like `tensors`.
    pub fn new(params: AdamParams, tensors: &[Tensor]) -> AdamState {
        AdamState {
            params,
            m: tensors
                .iter()
                .map(|t| Tensor::zeros(t.rows(), t.cols()))
                .collect(),
            v: tensors
                .iter()
                .map(|t| Tensor::zeros(t.rows(), t.cols()))
                .collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One Adam update over all parameter tensors. Deterministic: identical
    /// `(params, grads, state)` produce bit-identical outputs.
    pub fn step(&mut self, tensors: &mut [Tensor], grads: &[&Tensor]) -> Result<()> {
        if tensors.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam_step: {} tensors, {} grads, state holds {}",
                tensors.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for i in 0..tensors.len() {
            if tensors[i].shape() != grads[i].shape() || tensors[i].shape() != self.m[i].shape() {
                return Err(Error::ShapeMismatch(format!(
                    "adam_step: tensor {} is {:?}, grad {:?}, moment {:?}",
                    i,
                    tensors[i].shape(),
                    grads[i].shape(),
                    self.m[i].shape()
                )));
            }
        }
        self.t += 1;
        let AdamParams {
            lr,
            beta1,
            beta2,
            eps,
        } = self.params;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..tensors.len() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = tensors[i].data_mut();
            let g = grads[i].data();
            for j in 0..p.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
