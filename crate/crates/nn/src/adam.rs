//! Bias-corrected Adam optimizer operating on (values, grads) pairs
//! visited in a fixed order.

use crate::tensor::NnError;

/// Adam with the conventional defaults (lr 0.001, betas 0.9/0.999,
/// eps 1e-8, no weight decay). Moment buffers are allocated lazily on the
/// first step and matched to parameters by visitation order, so the same
/// traversal order must be used on every step.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
    cursor: usize,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: Vec::new(),
            cursor: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Starts a new optimization step; must precede the parameter visits.
    pub fn begin_step(&mut self) {
        self.step += 1;
        self.cursor = 0;
    }

    /// Applies the update for one parameter tensor. `name` is used only in
    /// diagnostics. Returns an error (leaving the parameter untouched) if
    /// any gradient entry is non-finite.
    pub fn update(
        &mut self,
        name: &str,
        values: &mut [f64],
        grads: &[f64],
    ) -> Result<(), NnError> {
        if values.len() != grads.len() {
            return Err(NnError::ShapeMismatch {
                what: "adam gradient length",
                got: grads.len().to_string(),
                want: values.len().to_string(),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient(name.to_string()));
        }
        if self.cursor == self.moments.len() {
            self.moments
                .push((vec![0.0; values.len()], vec![0.0; values.len()]));
        }
        let (m, v) = &mut self.moments[self.cursor];
        if m.len() != values.len() {
            return Err(NnError::ShapeMismatch {
                what: "adam moment buffer (visitation order changed?)",
                got: values.len().to_string(),
                want: m.len().to_string(),
            });
        }
        self.cursor += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..values.len() {
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grads[i];
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            values[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut adam = Adam::new(0.001);
        let mut theta = vec![1.0, -2.0, 0.5];
        let grads = vec![0.0; 3];
        for _ in 0..5 {
            adam.begin_step();
            adam.update("theta", &mut theta, &grads).unwrap();
        }
        assert_eq!(theta, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_matches_the_closed_form() {
        // At t=1 the bias corrections cancel the moment decay exactly:
        // delta = -lr * g / (|g| + eps).
        let mut adam = Adam::new(0.001);
        for g in [10.0, -3.0, 0.25] {
            let mut theta = vec![2.0];
            adam.step = 0;
            adam.moments.clear();
            adam.begin_step();
            adam.update("t", &mut theta, &[g]).unwrap();
            let expect = 2.0 - 0.001 * g / (g.abs() + 1e-8);
            assert!((theta[0] - expect).abs() < 1e-15, "g={g}");
        }
    }

    #[test]
    fn quadratic_descent_shrinks_theta_after_burn_in() {
        let mut adam = Adam::new(0.001);
        let mut theta = 1.0f64;
        let mut history = Vec::new();
        for _ in 0..100 {
            let grad = 2.0 * theta;
            let mut p = vec![theta];
            adam.begin_step();
            adam.update("theta", &mut p, &[grad]).unwrap();
            theta = p[0];
            history.push(theta.abs());
        }
        // Strictly decreasing magnitude after the first few steps.
        for w in history[5..].windows(2) {
            assert!(w[1] < w[0], "|theta| must keep shrinking: {w:?}");
        }
        assert!(theta.abs() < 1.0 - 0.001 * 50.0 + 0.1);
    }

    #[test]
    fn non_finite_gradients_are_rejected() {
        let mut adam = Adam::new(0.001);
        let mut theta = vec![1.0];
        adam.begin_step();
        assert!(matches!(
            adam.update("theta", &mut theta, &[f64::NAN]),
            Err(NnError::NonFiniteGradient(_))
        ));
        assert_eq!(theta, vec![1.0]);
    }
}
