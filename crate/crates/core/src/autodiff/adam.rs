//! Adam optimizer with bias correction.

use serde::{Deserialize, Serialize};

use super::{AutodiffError, Result, Tensor};

/// Optimizer state: step counter plus first/second moment buffers, one per
/// parameter tensor in a fixed order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    step: u64,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Standard defaults: β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(learning_rate: f64, parameter_sizes: &[usize]) -> Self {
        Self {
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: parameter_sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: parameter_sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected update from each tensor's accumulated
    /// gradient. A missing gradient counts as zero; a NaN gradient aborts.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(AutodiffError::Contract(format!(
                "{} parameter tensors for {} moment buffers",
                params.len(),
                self.m.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if let Some(g) = p.grad() {
                if g.iter().any(|v| v.is_nan()) {
                    return Err(AutodiffError::NanGradient(i));
                }
            }
        }
        self.step += 1;
        let bias1 = 1.0 - self.beta1.powi(self.step as i32);
        let bias2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((param, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if m.len() != param.numel() {
                return Err(AutodiffError::Contract(
                    "moment buffer does not match parameter shape".into(),
                ));
            }
            let Some(grad) = param.grad() else { continue };
            let grad = grad.to_vec();
            let data = param.data_mut();
            for j in 0..data.len() {
                let g = grad[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                data[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        // g = 1 with fresh state: m_hat = v_hat = 1, so the update is
        // lr / (1 + eps).
        let lr = 0.05;
        let mut p = Tensor::scalar(2.0).with_grad();
        p.accumulate_grad(&[1.0]);
        let mut adam = AdamState::new(lr, &[1]);
        adam.step(&mut [&mut p]).unwrap();
        assert_abs_diff_eq!(p.data()[0], 2.0 - lr / (1.0 + 1e-8), epsilon = 1e-15);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = Tensor::from_vec(&[2], vec![1.0, -1.0]).unwrap().with_grad();
        let mut adam = AdamState::new(0.1, &[2]);
        adam.step(&mut [&mut p]).unwrap();
        assert_eq!(p.data(), &[1.0, -1.0]);
    }

    #[test]
    fn nan_gradient_aborts() {
        let mut p = Tensor::scalar(0.0).with_grad();
        p.accumulate_grad(&[f64::NAN]);
        let mut adam = AdamState::new(0.1, &[1]);
        assert!(matches!(
            adam.step(&mut [&mut p]),
            Err(AutodiffError::NanGradient(0))
        ));
    }

    #[test]
    fn descends_a_quadratic_monotonically() {
        // f(x) = (x - 3)^2, df/dx = 2(x - 3)
        let mut x = Tensor::scalar(0.0).with_grad();
        let mut adam = AdamState::new(0.05, &[1]);
        let mut last = (0.0f64 - 3.0).powi(2);
        for _ in 0..50 {
            let v = x.data()[0];
            x.zero_grad();
            x.accumulate_grad(&[2.0 * (v - 3.0)]);
            adam.step(&mut [&mut x]).unwrap();
            let loss = (x.data()[0] - 3.0).powi(2);
            assert!(loss <= last + 1e-12, "loss rose from {last} to {loss}");
            last = loss;
        }
        assert!(last < 4.0);
    }
}
