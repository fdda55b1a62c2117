use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::network::Network;

use super::loss::{loss_gradient, LossKind};

/// Gradients of the mean batch loss, shaped like the network parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    /// Flat tensors in the order of [`Network::parameters`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| {
                [
                    w.as_slice().expect("standard layout"),
                    b.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .all(|v| v.is_finite())
    }
}

/// Reverse-mode gradients of the mean loss over the batch `(x, y)`.
pub fn backprop(
    net: &Network,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    kind: LossKind,
) -> Result<Gradients> {
    if x.nrows() == 0 {
        return Err(Error::invalid("backprop on an empty batch"));
    }
    if x.nrows() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} rows vs {} targets",
            x.nrows(),
            y.len()
        )));
    }
    let trace = net.trace_batch(x)?;
    let layers = net.layers();
    let n_layers = layers.len();

    let pred: Vec<f64> = trace.activations[n_layers].column(0).to_vec();
    let targets: Vec<f64> = y.to_vec();
    let dpred = loss_gradient(kind, &targets, &pred)?;

    let out = &layers[n_layers - 1];
    let mut delta = Array2::from_shape_fn((x.nrows(), 1), |(i, _)| {
        dpred[i] * out.activation.derivative(trace.pre_activations[n_layers - 1][[i, 0]])
    });

    let mut weights = Vec::with_capacity(n_layers);
    let mut biases = Vec::with_capacity(n_layers);
    for l in (0..n_layers).rev() {
        // `dot` may hand back a column-major result; keep row-major.
        weights.push(delta.t().dot(&trace.activations[l]).as_standard_layout().into_owned());
        biases.push(delta.sum_axis(Axis(0)));
        if l > 0 {
            let mut back = delta.dot(&layers[l].weights);
            let act = layers[l - 1].activation;
            back.zip_mut_with(&trace.pre_activations[l - 1], |d, &z| *d *= act.derivative(z));
            delta = back;
        }
    }
    weights.reverse();
    biases.reverse();
    let grads = Gradients { weights, biases };
    if !grads.is_finite() {
        return Err(Error::GradientOverflow);
    }
    Ok(grads)
}
