//! Small fully connected network with a hand-written backward pass.

use serde::{Deserialize, Serialize};

use super::rng::Rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

/// Dense layer, weights stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.bias
                .iter()
                .zip(self.weights.chunks_exact(self.inputs))
                .map(|(b, row)| {
                    let z = b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
                    self.activation.apply(z)
                }),
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Activations recorded during a forward pass; `values[0]` is the input.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    values: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Mlp {
    /// Network with tanh hidden layers and the given output activation.
    /// Weights are drawn uniformly from `±1/sqrt(fan_in)`, biases start at zero.
    pub fn new(sizes: &[usize], output: Activation, rng: &mut Rng) -> Result<Self> {
        let mut net = Mlp::zeros(sizes, output)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.uniform_range(-bound, bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], output: Activation) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::invalid(
                "a network needs at least an input and an output size",
            ));
        }
        if sizes.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense {
                inputs: w[0],
                outputs: w[1],
                weights: vec![0.0; w[0] * w[1]],
                bias: vec![0.0; w[1]],
                activation: if i == last { output } else { Activation::Tanh },
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("network layers"));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.inputs == 0 || layer.outputs == 0 {
                return Err(Error::invalid("layer sizes must be positive"));
            }
            Error::check_dim(layer.inputs * layer.outputs, layer.weights.len())?;
            Error::check_dim(layer.outputs, layer.bias.len())?;
            if i > 0 {
                Error::check_dim(layers[i - 1].outputs, layer.inputs)?;
            }
            if layer
                .weights
                .iter()
                .chain(&layer.bias)
                .any(|v| !v.is_finite())
            {
                return Err(Error::NonFinite("network parameters"));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Flat parameter vector: per layer, weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        Error::check_dim(self.param_count(), flat.len())?;
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    pub fn with_params(&self, flat: &[f64]) -> Result<Self> {
        let mut net = self.clone();
        net.set_params(flat)?;
        Ok(net)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.input_dim(), input.len())?;
        let mut x = input.to_vec();
        let mut y = Vec::new();
        for layer in &self.layers {
            layer.forward_into(&x, &mut y);
            std::mem::swap(&mut x, &mut y);
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<Trace> {
        Error::check_dim(self.input_dim(), input.len())?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.to_vec());
        for layer in &self.layers {
            let mut y = Vec::with_capacity(layer.outputs);
            layer.forward_into(values.last().unwrap(), &mut y);
            values.push(y);
        }
        Ok(Trace { values })
    }

    /// Gradient of `output_grad · f(input)` with respect to every parameter,
    /// in the same order as [`Mlp::params`].
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<Vec<f64>> {
        let trace = self.forward_trace(input)?;
        let mut grads = vec![0.0; self.param_count()];
        self.accumulate_gradient(&trace, output_grad, 1.0, &mut grads)?;
        Ok(grads)
    }

    /// Adds `scale * d(output_grad · f)/dθ` into `grads` using a recorded trace.
    pub fn accumulate_gradient(
        &self,
        trace: &Trace,
        output_grad: &[f64],
        scale: f64,
        grads: &mut [f64],
    ) -> Result<()> {
        Error::check_dim(self.output_dim(), output_grad.len())?;
        Error::check_dim(self.param_count(), grads.len())?;
        Error::check_dim(self.layers.len() + 1, trace.values.len())?;

        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut offset = 0;
        for layer in &self.layers {
            offsets.push(offset);
            offset += layer.param_count();
        }

        let mut delta: Vec<f64> = output_grad.iter().map(|g| g * scale).collect();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let out = &trace.values[li + 1];
            let inp = &trace.values[li];
            for (d, &a) in delta.iter_mut().zip(out) {
                *d *= layer.activation.derivative_from_output(a);
            }
            let base = offsets[li];
            let (w_grad, rest) =
                grads[base..base + layer.param_count()].split_at_mut(layer.weights.len());
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut w_grad[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, &x) in row.iter_mut().zip(inp) {
                    *g += d * x;
                }
                rest[o] += d;
            }
            if li > 0 {
                let mut next = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (n, &w) in next.iter_mut().zip(row) {
                        *n += d * w;
                    }
                }
                delta = next;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_layer(w: f64, b: f64, act: Activation) -> Mlp {
        Mlp::from_layers(vec![Dense {
            inputs: 1,
            outputs: 1,
            weights: vec![w],
            bias: vec![b],
            activation: act,
        }])
        .unwrap()
    }

    #[test]
    fn zero_weight_net_returns_bias() {
        let mut net = Mlp::zeros(&[3, 4, 2], Activation::Identity).unwrap();
        let n = net.param_count();
        let mut p = vec![0.0; n];
        p[n - 2] = 0.25;
        p[n - 1] = -1.5;
        net.set_params(&p).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 7.0]).unwrap(), vec![0.25, -1.5]);
    }

    #[test]
    fn identity_layer() {
        let net = Mlp::from_layers(vec![Dense {
            inputs: 2,
            outputs: 2,
            weights: vec![1.0, 0.0, 0.0, 1.0],
            bias: vec![0.0, 0.0],
            activation: Activation::Identity,
        }])
        .unwrap();
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn tanh_unit() {
        let net = one_layer(1.0, 0.0, Activation::Tanh);
        let y = net.forward(&[0.5]).unwrap()[0];
        assert!((y - 0.46211715726000974).abs() < 1e-12);
    }

    #[test]
    fn linear_gradient_is_input() {
        let net = one_layer(2.0, 0.0, Activation::Identity);
        let g = net.backward(&[3.0], &[1.0]).unwrap();
        assert_eq!(g, vec![3.0, 1.0]);
    }

    #[test]
    fn zero_output_grad_gives_zero_gradient() {
        let mut rng = Rng::new(3);
        let net = Mlp::new(&[3, 5, 2], Activation::Identity, &mut rng).unwrap();
        let g = net.backward(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_errors() {
        let net = Mlp::zeros(&[2, 3], Activation::Identity).unwrap();
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(net.backward(&[1.0, 2.0], &[1.0]).is_err());
        assert!(Mlp::zeros(&[2], Activation::Identity).is_err());
    }

    #[test]
    fn params_round_trip() {
        let mut rng = Rng::new(11);
        let net = Mlp::new(&[2, 16, 16, 5], Activation::Identity, &mut rng).unwrap();
        let rebuilt = Mlp::zeros(&[2, 16, 16, 5], Activation::Identity)
            .unwrap()
            .with_params(&net.params())
            .unwrap();
        assert_eq!(
            net.forward(&[0.3, -0.7]).unwrap(),
            rebuilt.forward(&[0.3, -0.7]).unwrap()
        );
    }
}
