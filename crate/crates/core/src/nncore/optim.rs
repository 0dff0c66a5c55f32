use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::NnError;

/// Adaptive-moment optimizer hyperparameters and step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Adam {
    pub rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    #[serde(skip)]
    pub steps: u64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            steps: 0,
        }
    }
}

impl Adam {
    pub fn with_rate(rate: f64) -> Self {
        Self {
            rate,
            ..Self::default()
        }
    }

    /// Apply one update from the accumulated gradients. A non-finite gradient
    /// rejects the whole step and leaves every parameter untouched.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), NnError> {
        for p in store.params() {
            if p.grad.data().iter().any(|g| !g.is_finite()) {
                return Err(NnError::NonFiniteGradient(p.name.clone()));
            }
        }
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for p in store.params_mut() {
            let g = p.grad.data();
            let m = p.first_moment.data_mut();
            for (mi, gi) in m.iter_mut().zip(g) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
            }
            let v = p.second_moment.data_mut();
            for (vi, gi) in v.iter_mut().zip(g) {
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
            }
            let (m, v) = (p.first_moment.data(), p.second_moment.data());
            let x = p.value.data_mut();
            for ((xi, mi), vi) in x.iter_mut().zip(m).zip(v) {
                *xi -= self.rate * (mi / c1) / ((vi / c2).sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::Tensor;

    fn scalar(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", Tensor::new(vec![1], vec![v]).unwrap());
        s
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = scalar(0.7);
        let mut opt = Adam::default();
        for _ in 0..3 {
            opt.step(&mut s).unwrap();
        }
        assert_eq!(s.flat_values(), vec![0.7]);
    }

    #[test]
    fn first_step_closed_form() {
        let mut s = scalar(0.0);
        s.params_mut()[0].grad.data_mut()[0] = 1.0;
        let mut opt = Adam::with_rate(0.1);
        opt.step(&mut s).unwrap();
        // m̂ = g, v̂ = g², so the step is −rate·g/(|g| + ε).
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((s.flat_values()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut s = scalar(1.0);
        s.params_mut()[0].grad.data_mut()[0] = f64::NAN;
        let mut opt = Adam::default();
        assert!(matches!(opt.step(&mut s), Err(NnError::NonFiniteGradient(_))));
        assert_eq!(s.flat_values(), vec![1.0]);
        assert_eq!(opt.steps, 0);
    }
}
