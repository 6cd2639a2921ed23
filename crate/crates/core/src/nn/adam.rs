//! Bias-corrected Adam over a flat parameter vector.

use crate::error::{Error, Result};
use crate::mat::Real;

#[derive(Debug, Clone)]
pub struct AdamState<F> {
    pub step_count: u64,
    pub first_moment: Vec<F>,
    pub second_moment: Vec<F>,
    pub learning_rate: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
}

impl<F: Real> AdamState<F> {
    pub fn new(param_count: usize, learning_rate: F, beta1: F, beta2: F, eps: F) -> Self {
        Self {
            step_count: 0,
            first_moment: vec![F::zero(); param_count],
            second_moment: vec![F::zero(); param_count],
            learning_rate,
            beta1,
            beta2,
            eps,
        }
    }

    /// theta -= lr * m_hat / (sqrt(v_hat) + eps), with bias-corrected moments.
    pub fn step(&mut self, params: &mut [F], grads: &[F]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam: params {}, grads {}, moments {}",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let one = F::one();
        let bc1 = one - self.beta1.powi(t);
        let bc2 = one - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            let m = self.beta1 * self.first_moment[i] + (one - self.beta1) * g;
            let v = self.beta2 * self.second_moment[i] + (one - self.beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            params[i] = params[i] - self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
