use serde::{Deserialize, Serialize};

use super::{NnError, ParamStore};
use crate::scalar::FloatScalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for a group of tensors in one [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub config: AdamConfig,
    pub tensors: Vec<usize>,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: FloatScalar> OptimizerState<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>, tensors: Vec<usize>) -> Self {
        let zeros = |&i: &usize| vec![T::zero(); store.tensors[i].len()];
        OptimizerState {
            config,
            first: tensors.iter().map(zeros).collect(),
            second: tensors.iter().map(zeros).collect(),
            tensors,
            step: 0,
        }
    }

    /// Applies one bias-corrected Adam update from the grads in `store`.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<(), NnError> {
        for (k, &i) in self.tensors.iter().enumerate() {
            let t = &store.tensors[i];
            if t.grad.len() != t.values.len() || self.first[k].len() != t.values.len() {
                return Err(NnError::ShapeMismatch(format!(
                    "optimizer state for '{}' does not match its tensor",
                    t.name
                )));
            }
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let one = T::one();
        let bc1 = one - b1.powi(self.step as i32);
        let bc2 = one - b2.powi(self.step as i32);
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        for (k, &i) in self.tensors.iter().enumerate() {
            let t = &mut store.tensors[i];
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for j in 0..t.values.len() {
                let g = t.grad[j];
                m[j] = b1 * m[j] + (one - b1) * g;
                v[j] = b2 * v[j] + (one - b2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                t.values[j] = t.values[j] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
