//! Fully connected feedforward regressor: 3 inputs, `n_h` equally wide hidden
//! layers and a single output.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
            Activation::Sigmoid => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative with respect to the pre-activation. ReLU uses 0 at the kink.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            Activation::Sigmoid => {
                let s = self.apply(z);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_inputs: usize,
    pub n_hidden_layers: usize,
    pub neurons_per_hidden: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            n_inputs: crate::dataset::N_FEATURES,
            n_hidden_layers: 2,
            neurons_per_hidden: 200,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Linear,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_inputs == 0 || self.n_hidden_layers == 0 || self.neurons_per_hidden == 0 {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        Ok(())
    }

    /// `(fan_out, fan_in)` of every layer, input side first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.n_hidden_layers + 1);
        let mut fan_in = self.n_inputs;
        for _ in 0..self.n_hidden_layers {
            shapes.push((self.neurons_per_hidden, fan_in));
            fan_in = self.neurons_per_hidden;
        }
        shapes.push((1, fan_in));
        shapes
    }

    pub fn n_params(&self) -> usize {
        self.layer_shapes().iter().map(|(o, i)| o * (i + 1)).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `fan_out × fan_in`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Intermediates of a single-row forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub prediction: f64,
    /// `z_l` for every layer.
    pub pre_activations: Vec<Array1<f64>>,
    /// `a_0 = x`, then `a_l` for every layer.
    pub activations: Vec<Array1<f64>>,
}

/// Intermediates of a batched forward pass, one row per example.
#[derive(Clone, Debug)]
pub(crate) struct BatchTrace {
    pub pre_activations: Vec<Array2<f64>>,
    pub activations: Vec<Array2<f64>>,
}

impl Network {
    /// Builds a network from explicit layers, checking the shape chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let net = Network { layers };
        net.check_shapes()?;
        Ok(net)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(cfg: &NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seed::rng(cfg.seed);
        let shapes = cfg.layer_shapes();
        let last = shapes.len() - 1;
        let layers = shapes
            .into_iter()
            .enumerate()
            .map(|(l, (fan_out, fan_in))| {
                let limit = glorot_limit(fan_in, fan_out);
                let weights =
                    Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-limit..=limit));
                Layer {
                    weights,
                    biases: Array1::zeros(fan_out),
                    activation: if l == last {
                        cfg.output_activation
                    } else {
                        cfg.hidden_activation
                    },
                }
            })
            .collect();
        Network::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn check_shapes(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::ShapeMismatch("network has no layers".into()));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.biases.len() != layer.fan_out() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l}: {} biases for {} outputs",
                    layer.biases.len(),
                    layer.fan_out()
                )));
            }
            if l > 0 && layer.fan_in() != self.layers[l - 1].fan_out() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l} expects {} inputs, previous layer yields {}",
                    layer.fan_in(),
                    self.layers[l - 1].fan_out()
                )));
            }
            if !layer.weights.iter().chain(&layer.biases).all(|w| w.is_finite()) {
                return Err(Error::ShapeMismatch(format!("layer {l} holds non-finite parameters")));
            }
        }
        if self.layers[self.layers.len() - 1].fan_out() != 1 {
            return Err(Error::ShapeMismatch("output layer must have one unit".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        if x.len() != self.n_inputs() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} inputs, got {}",
                self.n_inputs(),
                x.len()
            )));
        }
        let mut activations = vec![Array1::from(x.to_vec())];
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let prev = activations.last().expect("input activation present");
            let z = layer.weights.dot(prev) + &layer.biases;
            let a = z.mapv(|v| layer.activation.apply(v));
            if !a.iter().chain(&z).all(|v| v.is_finite()) {
                return Err(Error::ForwardOverflow);
            }
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(ForwardTrace {
            prediction: activations[activations.len() - 1][0],
            pre_activations,
            activations,
        })
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?.prediction)
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_columns(x)?;
        let mut a = x.to_owned();
        for layer in &self.layers {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.biases.view().insert_axis(Axis(0));
            z.mapv_inplace(|v| layer.activation.apply(v));
            if !z.iter().all(|v| v.is_finite()) {
                return Err(Error::ForwardOverflow);
            }
            a = z;
        }
        Ok(a.column(0).to_owned())
    }

    fn check_columns(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.n_inputs() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} input columns, got {}",
                self.n_inputs(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Parameter tensors as flat slices: weights then biases, layer by layer.
    pub fn parameters(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weights.as_slice().expect("standard layout"),
                    l.biases.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weights.as_slice_mut().expect("standard layout"),
                    l.biases.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub(crate) fn trace_batch(&self, x: ArrayView2<f64>) -> Result<BatchTrace> {
        self.check_columns(x)?;
        let mut activations = vec![x.to_owned()];
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let prev = activations.last().expect("input activation present");
            let mut z = prev.dot(&layer.weights.t());
            z += &layer.biases.view().insert_axis(Axis(0));
            let a = z.mapv(|v| layer.activation.apply(v));
            if !a.iter().chain(&z).all(|v| v.is_finite()) {
                return Err(Error::ForwardOverflow);
            }
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(BatchTrace {
            pre_activations,
            activations,
        })
    }

    /// Scalar prediction for a single row view.
    pub fn predict_row(&self, x: ArrayView1<f64>) -> Result<f64> {
        self.predict_one(&x.to_vec())
    }
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
