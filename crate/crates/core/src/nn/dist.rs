use rand::Rng;

use super::NnError;
use crate::scalar::FloatScalar;

/// Categorical distribution parameterised by logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical<T> {
    log_probs: Vec<T>,
}

impl<T: FloatScalar> Categorical<T> {
    pub fn from_logits(logits: &[T]) -> Result<Self, NnError> {
        if logits.is_empty() || logits.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite("logits"));
        }
        let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + logits.iter().fold(T::zero(), |acc, &v| acc + (v - m).exp()).ln();
        Ok(Categorical {
            log_probs: logits.iter().map(|&v| v - lse).collect(),
        })
    }

    /// Builds from already-normalised log-probabilities (e.g. a log-softmax node).
    pub fn from_log_probs(log_probs: Vec<T>) -> Self {
        Categorical { log_probs }
    }

    pub fn probs(&self) -> Vec<T> {
        self.log_probs.iter().map(|v| v.exp()).collect()
    }

    pub fn log_prob(&self, action: usize) -> T {
        self.log_probs[action]
    }

    pub fn entropy(&self) -> T {
        self.log_probs
            .iter()
            .fold(T::zero(), |acc, &lp| acc - lp.exp() * lp)
    }

    /// Most probable action; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &lp) in self.log_probs.iter().enumerate() {
            if lp > self.log_probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, lp) in self.log_probs.iter().enumerate() {
            acc += lp.as_f64().exp();
            if u < acc {
                return i;
            }
        }
        self.log_probs.len() - 1
    }
}
