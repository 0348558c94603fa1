//! Minimal dense layers with hand-written backpropagation.
//!
//! Both prediction heads are one-hidden-layer perceptrons with a `tanh`
//! hidden activation; this module holds the shared forward/backward code.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fully connected layer `y = W x + b`, weights stored row-major `outputs x inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    /// Glorot-uniform initialisation with zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        debug_assert_eq!(y.len(), self.outputs);
        for (o, out) in y.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *out = self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// Accumulates `dW += dy x^T`, `db += dy` into `grad`; writes `W^T dy` into `dx` if given.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense, dx: Option<&mut [f64]>) {
        for (o, &g) in dy.iter().enumerate() {
            grad.bias[o] += g;
            if g == 0.0 {
                continue;
            }
            let row = &mut grad.weights[o * self.inputs..(o + 1) * self.inputs];
            for (w, v) in row.iter_mut().zip(x) {
                *w += g * v;
            }
        }
        if let Some(dx) = dx {
            dx.iter_mut().for_each(|v| *v = 0.0);
            for (o, &g) in dy.iter().enumerate() {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                for (d, w) in dx.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
    }

    fn axpy(&mut self, scale: f64, other: &Dense) {
        for (w, g) in self.weights.iter_mut().zip(&other.weights) {
            *w += scale * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&other.bias) {
            *b += scale * g;
        }
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter())
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

/// `input -> tanh(hidden) -> linear output`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub hidden: Dense,
    pub output: Dense,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

impl Mlp {
    pub fn init<R: Rng + ?Sized>(inputs: usize, hidden: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            hidden: Dense::init(inputs, hidden, rng),
            output: Dense::init(hidden, outputs, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            hidden: Dense::zeros(self.hidden.inputs, self.hidden.outputs),
            output: Dense::zeros(self.output.inputs, self.output.outputs),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.inputs
    }

    pub fn output_dim(&self) -> usize {
        self.output.outputs
    }

    pub fn forward(&self, x: &[f64]) -> MlpCache {
        let mut hidden = vec![0.0; self.hidden.outputs];
        self.hidden.forward(x, &mut hidden);
        hidden.iter_mut().for_each(|h| *h = h.tanh());
        let mut output = vec![0.0; self.output.outputs];
        self.output.forward(&hidden, &mut output);
        MlpCache { hidden, output }
    }

    /// Accumulates parameter gradients for one example given `d loss / d output`.
    pub fn backward(&self, x: &[f64], cache: &MlpCache, d_output: &[f64], grad: &mut Mlp) {
        let mut d_hidden = vec![0.0; self.hidden.outputs];
        self.output
            .backward(&cache.hidden, d_output, &mut grad.output, Some(&mut d_hidden));
        for (d, h) in d_hidden.iter_mut().zip(&cache.hidden) {
            *d *= 1.0 - h * h;
        }
        self.hidden.backward(x, &d_hidden, &mut grad.hidden, None);
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &Mlp) {
        self.hidden.axpy(scale, &other.hidden);
        self.output.axpy(scale, &other.output);
    }

    pub fn scale(&mut self, factor: f64) {
        self.params_mut().for_each(|p| *p *= factor);
    }

    pub fn param_count(&self) -> usize {
        self.hidden.weights.len() + self.hidden.bias.len() + self.output.weights.len() + self.output.bias.len()
    }

    /// All parameters flattened in a fixed order (hidden W, hidden b, output W, output b).
    pub fn to_flat(&self) -> Vec<f64> {
        self.hidden.params().chain(self.output.params()).copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length");
        for (p, v) in self.params_mut().zip(flat) {
            *p = *v;
        }
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.hidden.params_mut().chain(self.output.params_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.hidden.params().chain(self.output.params()).all(|p| p.is_finite())
    }

    pub(crate) fn check_shape(&self) -> Result<(), String> {
        for (name, layer) in [("hidden", &self.hidden), ("output", &self.output)] {
            if layer.weights.len() != layer.inputs * layer.outputs {
                return Err(format!("{name}.weights has length {} (expected {})", layer.weights.len(), layer.inputs * layer.outputs));
            }
            if layer.bias.len() != layer.outputs {
                return Err(format!("{name}.bias has length {} (expected {})", layer.bias.len(), layer.outputs));
            }
        }
        if self.hidden.outputs != self.output.inputs {
            return Err("hidden.outputs does not match output.inputs".into());
        }
        if !self.is_finite() {
            return Err("non-finite weight".into());
        }
        Ok(())
    }
}
