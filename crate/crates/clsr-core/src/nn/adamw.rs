//! AdamW: Adam with decoupled weight decay.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AdamW<S> {
    pub lr: S,
    pub weight_decay: S,
    pub beta1: S,
    pub beta2: S,
    pub epsilon: S,
    step: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> AdamW<S> {
    pub fn new(lr: S, weight_decay: S) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: S::from_f64(0.9),
            beta2: S::from_f64(0.999),
            epsilon: S::from_f64(1e-8),
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One decoupled-weight-decay update:
    /// `p ← p − lr·m̂/(√v̂+ε) − lr·wd·p`.
    ///
    /// Moment buffers are allocated on the first call and must stay
    /// shape-congruent with the parameters afterwards. Every parameter must
    /// have its gradient populated.
    pub fn step(&mut self, params: &mut [&mut Tensor<S>]) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![S::zero(); p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::State(format!(
                "optimizer tracks {} parameters, got {}",
                self.m.len(),
                params.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = S::one() - self.beta1.powi(t);
        let bc2 = S::one() - self.beta2.powi(t);
        let one = S::one();

        for (idx, param) in params.iter_mut().enumerate() {
            let grad = param
                .grad()
                .ok_or_else(|| {
                    Error::State(format!("parameter {idx} has no gradient; run backward first"))
                })?
                .to_vec();
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            if m.len() != param.len() {
                return Err(Error::State(format!(
                    "moment buffer {idx} has {} entries, parameter has {}",
                    m.len(),
                    param.len()
                )));
            }
            let data = param.data_mut();
            for i in 0..data.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (one - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (one - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] = data[i]
                    - self.lr * m_hat / (v_hat.sqrt() + self.epsilon)
                    - self.lr * self.weight_decay * data[i];
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(value: f64, grad: f64) -> Tensor<f64> {
        let mut t = Tensor::from_vec(&[1], vec![value]).unwrap();
        t.grad_mut()[0] = grad;
        t
    }

    #[test]
    fn first_step_matches_hand_derivation() {
        // Fresh state, p = 1, g = 1: bias correction makes m̂ = v̂ = 1, so the
        // update is lr·(1/(1+ε)) + lr·wd·1.
        let lr = 1e-5;
        let wd = 1e-4;
        let mut opt = AdamW::new(lr, wd);
        let mut p = scalar_param(1.0, 1.0);
        opt.step(&mut [&mut p]).unwrap();
        let expected = 1.0 - lr * (1.0 / (1.0 + 1e-8)) - lr * wd * 1.0;
        assert!((p.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_grad_zero_decay_leaves_parameter_unchanged() {
        let mut opt = AdamW::new(1e-3, 0.0);
        let mut p = scalar_param(0.7, 0.0);
        opt.step(&mut [&mut p]).unwrap();
        assert_eq!(p.data()[0], 0.7);
    }

    #[test]
    fn two_steps_follow_the_scalar_recursion() {
        let (lr, wd) = (0.01, 0.0);
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let g = 0.5;
        let mut opt = AdamW::new(lr, wd);
        let mut p = scalar_param(2.0, g);

        // Independent scalar recursion.
        let mut expect = 2.0;
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t));
            let v_hat = v / (1.0 - b2.powi(t));
            expect -= lr * m_hat / (v_hat.sqrt() + eps);
        }

        opt.step(&mut [&mut p]).unwrap();
        p.grad_mut()[0] = g;
        opt.step(&mut [&mut p]).unwrap();
        assert_eq!(opt.step_count(), 2);
        assert!((p.data()[0] - expect).abs() < 1e-14);
    }

    #[test]
    fn missing_gradient_is_a_state_error() {
        let mut opt = AdamW::new(1e-3, 0.0);
        let mut p = Tensor::<f64>::zeros(&[2]);
        let err = opt.step(&mut [&mut p]).unwrap_err();
        assert!(matches!(err, crate::error::Error::State(_)));
    }
}
