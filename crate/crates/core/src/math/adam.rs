use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }
}

/// Moment accumulators for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(param_count: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One bias-corrected Adam descent step on `params` (minimizes the loss
    /// whose gradient is `grads`). Leaves everything untouched on error.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        Error::check_dim(self.m.len(), params.len())?;
        Error::check_dim(self.m.len(), grads.len())?;
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut state = AdamState::new(2, AdamConfig::default());
        let mut p = vec![1.0, -2.0];
        state.step(&mut p, &[1.0, 1.0]).unwrap();
        let m_before = state.first_moment().to_vec();
        let v_before = state.second_moment().to_vec();
        let p_before = p.clone();
        state.step(&mut p, &[0.0, 0.0]).unwrap();
        // Momentum from the first step keeps moving p; only a fresh state stays put.
        assert!(state.first_moment()[0] < m_before[0]);
        assert!(state.second_moment()[0] < v_before[0]);
        assert!(p[0] < p_before[0]);

        let mut fresh = AdamState::new(2, AdamConfig::default());
        let mut q = vec![1.0, -2.0];
        fresh.step(&mut q, &[0.0, 0.0]).unwrap();
        assert_eq!(q, vec![1.0, -2.0]);
        assert_eq!(fresh.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut state = AdamState::new(1, AdamConfig::default());
        let mut p = vec![0.0];
        state.step(&mut p, &[1.0]).unwrap();
        // m_hat = 1, v_hat = 1 => delta = -lr * 1 / (1 + 1e-8)
        assert!((p[0] + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn repeated_steps_move_against_gradient_sign() {
        let mut state = AdamState::new(2, AdamConfig::default());
        let mut p = vec![0.0, 0.0];
        let mut prev = p.clone();
        for _ in 0..2 {
            state.step(&mut p, &[2.0, -3.0]).unwrap();
            assert!(p[0] < prev[0]);
            assert!(p[1] > prev[1]);
            prev = p.clone();
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut state = AdamState::new(1, AdamConfig::default());
        let mut p = vec![0.5];
        assert!(matches!(
            state.step(&mut p, &[f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(p, vec![0.5]);
        assert_eq!(state.step_count(), 0);
    }
}
