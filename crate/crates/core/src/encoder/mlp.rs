use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    #[default]
    Gelu,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
            Activation::Gelu => 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => {
                let inner = GELU_C * (x + 0.044715 * x * x * x);
                let t = inner.tanh();
                let d_inner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
            }
        }
    }
}

/// Affine map `y = x W^T + b` with `W` stored as `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self { weight: Array2::zeros((output, input)), bias: Array1::zeros(output) }
    }

    pub fn random(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let std = (1.0 / input as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("valid std");
        let weight = Array2::from_shape_fn((output, input), |_| normal.sample(rng));
        Self { weight, bias: Array1::zeros(output) }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

/// Projector MLP: affine layers with an activation between consecutive layers
/// (none after the last).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

impl Mlp {
    pub fn new(layers: Vec<Linear>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Shape(format!(
                    "layer output {} does not feed next layer input {}",
                    pair[0].output_dim(),
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Self { layers, activation })
    }

    /// Random layers through `dims`, e.g. `[d_in, hidden, d_out]`.
    pub fn random(dims: &[usize], activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config("an MLP needs at least input and output dims".into()));
        }
        let layers = dims.windows(2).map(|d| Linear::random(d[0], d[1], rng)).collect();
        Self::new(layers, activation)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_traced(x)?.0)
    }

    pub fn forward_traced(&self, x: &Array2<f64>) -> Result<(Array2<f64>, MlpTrace)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!("MLP expects {} input columns, got {}", self.input_dim(), x.ncols())));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h);
            inputs.push(std::mem::replace(&mut h, Array2::zeros((0, 0))));
            if i < last {
                h = z.mapv(|v| self.activation.apply(v));
                pre_activations.push(z);
            } else {
                h = z;
            }
        }
        Ok((h, MlpTrace { inputs, pre_activations }))
    }

    /// Accumulate parameter gradients for upstream gradient `dy` into `grad`.
    pub fn backward(&self, trace: &MlpTrace, dy: &Array2<f64>, grad: &mut Mlp) {
        let mut delta = dy.clone();
        for i in (0..self.layers.len()).rev() {
            let x = &trace.inputs[i];
            grad.layers[i].weight += &delta.t().dot(x);
            grad.layers[i].bias += &delta.sum_axis(Axis(0));
            if i > 0 {
                let mut dx = delta.dot(&self.layers[i].weight);
                let pre = &trace.pre_activations[i - 1];
                dx.zip_mut_with(pre, |d, &z| *d *= self.activation.derivative(z));
                delta = dx;
            }
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Linear::zeros(l.input_dim(), l.output_dim())).collect(),
            activation: self.activation,
        }
    }
}

/// Apply a projector to a matrix.
pub fn mlp_forward(x: &Array2<f64>, mlp: &Mlp) -> Result<Array2<f64>> {
    mlp.forward(x)
}
