use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, Activation, Mlp, Rng};

use super::Policy;

pub const HIDDEN: [usize; 2] = [16, 16];

fn sizes(obs_dim: usize, out: usize) -> Vec<usize> {
    vec![obs_dim, HIDDEN[0], HIDDEN[1], out]
}

/// Categorical policy: softmax over the network's `N` outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    net: Mlp,
}

impl SoftmaxPolicy {
    pub fn new(obs_dim: usize, actions: usize, rng: &mut Rng) -> Result<Self> {
        Self::from_net(Mlp::new(
            &sizes(obs_dim, actions),
            Activation::Identity,
            rng,
        )?)
    }

    pub fn zeros(obs_dim: usize, actions: usize) -> Result<Self> {
        Self::from_net(Mlp::zeros(&sizes(obs_dim, actions), Activation::Identity)?)
    }

    pub fn from_net(net: Mlp) -> Result<Self> {
        if net.output_dim() < 2 {
            return Err(Error::invalid(
                "a categorical policy needs at least two actions",
            ));
        }
        Ok(SoftmaxPolicy { net })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn actions(&self) -> usize {
        self.net.output_dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn log_probs(&self, state: &[f64]) -> Result<Vec<f64>> {
        let z = self.net.forward(state)?;
        let lse = log_sum_exp(&z)?;
        Ok(z.iter().map(|v| v - lse).collect())
    }

    pub fn probabilities(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(self.log_probs(state)?.into_iter().map(f64::exp).collect())
    }

    pub fn action_log_prob(&self, state: &[f64], action: usize) -> Result<f64> {
        if action >= self.actions() {
            return Err(Error::invalid(format!(
                "action {action} out of range 0..{}",
                self.actions()
            )));
        }
        Ok(self.log_probs(state)?[action])
    }

    /// Adds `scale * d log π(action | state) / dθ` into `grads`.
    pub fn accumulate_log_prob_gradient(
        &self,
        state: &[f64],
        action: usize,
        scale: f64,
        grads: &mut [f64],
    ) -> Result<()> {
        if action >= self.actions() {
            return Err(Error::invalid(format!(
                "action {action} out of range 0..{}",
                self.actions()
            )));
        }
        let trace = self.net.forward_trace(state)?;
        let z = trace.output();
        let lse = log_sum_exp(z)?;
        let g: Vec<f64> = z
            .iter()
            .enumerate()
            .map(|(k, v)| f64::from(u8::from(k == action)) - (v - lse).exp())
            .collect();
        self.net.accumulate_gradient(&trace, &g, scale, grads)
    }

    pub fn params(&self) -> Vec<f64> {
        self.net.params()
    }

    pub fn with_params(&self, flat: &[f64]) -> Result<Self> {
        Ok(SoftmaxPolicy {
            net: self.net.with_params(flat)?,
        })
    }
}

impl Policy for SoftmaxPolicy {
    type Action = usize;

    fn sample(&self, state: &[f64], rng: &mut Rng) -> Result<usize> {
        let p = self.probabilities(state)?;
        rng.weighted_index(&p)
            .ok_or(Error::NonFinite("action probabilities"))
    }
}

/// Deterministic heading policy emitting `φ = π (1 + tanh(o)) ∈ [0, 2π]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnglePolicy {
    net: Mlp,
}

impl AnglePolicy {
    pub fn new(obs_dim: usize, rng: &mut Rng) -> Result<Self> {
        Self::from_net(Mlp::new(&sizes(obs_dim, 1), Activation::Identity, rng)?)
    }

    pub fn zeros(obs_dim: usize) -> Result<Self> {
        Self::from_net(Mlp::zeros(&sizes(obs_dim, 1), Activation::Identity)?)
    }

    pub fn from_net(net: Mlp) -> Result<Self> {
        Error::check_dim(1, net.output_dim())?;
        Ok(AnglePolicy { net })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn angle(&self, state: &[f64]) -> Result<f64> {
        let o = self.net.forward(state)?[0];
        Ok(PI * (1.0 + o.tanh()))
    }

    pub fn params(&self) -> Vec<f64> {
        self.net.params()
    }

    pub fn with_params(&self, flat: &[f64]) -> Result<Self> {
        Ok(AnglePolicy {
            net: self.net.with_params(flat)?,
        })
    }
}

impl Policy for AnglePolicy {
    type Action = f64;

    fn sample(&self, state: &[f64], _rng: &mut Rng) -> Result<f64> {
        self.angle(state)
    }
}
