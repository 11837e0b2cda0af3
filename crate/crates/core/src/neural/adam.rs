use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AdamState<T> {
    pub step: u64,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> AdamState<T> {
    pub fn new(dim: usize, lr: T) -> Self {
        Self {
            step: 0,
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            m: vec![T::zero(); dim],
            v: vec![T::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn update(&mut self, params: &mut [T], grad: &[T]) -> Result<()> {
        if params.len() != self.dim() || grad.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: params.len().max(grad.len()),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = T::one() - self.beta1.powi(t);
        let c2 = T::one() - self.beta2.powi(t);
        for k in 0..params.len() {
            let g = grad[k];
            self.m[k] = self.beta1 * self.m[k] + (T::one() - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (T::one() - self.beta2) * g * g;
            let mhat = self.m[k] / c1;
            let vhat = self.v[k] / c2;
            params[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut st = AdamState::new(3, 0.01);
        let mut p = vec![1.0, -2.0, 3.0];
        st.update(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn minimizes_a_parabola() {
        let mut st = AdamState::new(1, 0.1);
        let mut p = vec![1.0f64];
        for _ in 0..500 {
            let g = [2.0 * p[0]];
            st.update(&mut p, &g).unwrap();
        }
        assert!(p[0].abs() < 1e-3, "{}", p[0]);
    }

    #[test]
    fn first_step_has_learning_rate_magnitude() {
        for &g in &[1e-6, 0.3, 1.0, 250.0, -1e7] {
            let mut st = AdamState::new(1, 0.01);
            let mut p = vec![0.0f64];
            st.update(&mut p, &[g]).unwrap();
            let step = p[0].abs();
            assert!((0.9 * 0.01..=0.01).contains(&step), "grad {g}: step {step}");
        }
    }

    #[test]
    fn rejects_wrong_dimension() {
        let mut st = AdamState::new(2, 0.01);
        assert!(st.update(&mut [0.0f64; 3], &[0.0; 3]).is_err());
    }
}
