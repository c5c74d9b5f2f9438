//! Adam optimizer over a flat parameter vector.

use crate::error::{CoreError, Result};
use crate::math;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// One bias-corrected Adam update in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(CoreError::Shape(format!(
                "adam buffers sized {}, got params {} grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - math::powi(self.beta1, self.step);
        let bc2 = 1.0 - math::powi(self.beta2, self.step);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (math::sqrt(v_hat) + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_about_lr() {
        // g=1: m_hat = v_hat = 1 after bias correction, so the update is
        // lr / (1 + eps) ~ lr.
        let mut s = AdamState::new(0.001, 1);
        let mut p = [5.0];
        s.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] - (5.0 - 0.001 / (1.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut s = AdamState::new(0.001, 3);
        let mut p = [1.0, -2.0, 0.5];
        for _ in 0..10 {
            s.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, [1.0, -2.0, 0.5]);
    }

    #[test]
    fn scalar_quadratic_converges() {
        // f(w) = w^2, grad = 2w. 1000 steps at lr 0.001 must shrink |w|.
        let mut s = AdamState::new(0.001, 1);
        let mut p = [1.0];
        for _ in 0..1000 {
            let g = [2.0 * p[0]];
            s.step(&mut p, &g).unwrap();
        }
        assert!(p[0].abs() < 0.5, "w = {}", p[0]);
    }

    #[test]
    fn sign_of_update_opposes_gradient() {
        let mut s = AdamState::new(0.01, 2);
        let mut p = [0.0, 0.0];
        s.step(&mut p, &[3.0, -0.2]).unwrap();
        assert!(p[0] < 0.0 && p[1] > 0.0);
    }

    #[test]
    fn shape_mismatch_errors() {
        let mut s = AdamState::new(0.001, 2);
        let mut p = [0.0; 3];
        assert!(matches!(
            s.step(&mut p, &[0.0; 3]),
            Err(CoreError::Shape(_))
        ));
    }

    #[test]
    fn matches_reference_formula_trajectory() {
        // Independent transcription of the Adam update rule with running
        // scalars, checked against the vector implementation.
        let mut s = AdamState::new(0.05, 1);
        let mut p = [0.7];
        let (mut m, mut v, mut w) = (0.0f64, 0.0f64, 0.7f64);
        for t in 1..=25u32 {
            let g = w * w * w - 0.3; // arbitrary smooth gradient field
            let gp = [p[0] * p[0] * p[0] - 0.3];
            s.step(&mut p, &gp).unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32));
            let vh = v / (1.0 - 0.999f64.powi(t as i32));
            w -= 0.05 * mh / (vh.sqrt() + 1e-8);
            assert!((p[0] - w).abs() < 1e-12, "t={t}: {} vs {w}", p[0]);
        }
    }
}
