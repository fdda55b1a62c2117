//! Independent reference computations used to check the library.

use fatigue_core::network::{Activation, Layer, Network};
use fatigue_core::training::{backprop, compute_loss, LossKind};
use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_chacha::ChaCha8Rng;

pub fn mse(y: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        s += (y[i] - p[i]).powi(2);
    }
    s / y.len() as f64
}

pub fn msle(y: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        let q = if p[i] < 0.0 { 0.0 } else { p[i] };
        s += ((y[i] + 1.0).ln() - (q + 1.0).ln()).powi(2);
    }
    s / y.len() as f64
}

pub fn r2(y: &[f64], p: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = y.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
    let ss_tot: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    1.0 - ss_res / ss_tot
}

pub fn batch_loss(net: &Network, x: &Array2<f64>, y: &Array1<f64>, kind: LossKind) -> f64 {
    let p = net.forward_batch(x.view()).unwrap();
    compute_loss(kind, y.as_slice().unwrap(), p.as_slice().unwrap()).unwrap()
}

/// Random network with explicit layer sizes; weights in [-1, 1], biases in
/// [-0.5, 0.5].
pub fn random_network(
    rng: &mut ChaCha8Rng,
    sizes: &[usize],
    hidden: Activation,
    output: Activation,
) -> Network {
    let layers = sizes
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let last = i == sizes.len() - 2;
            Layer {
                weights: Array2::from_shape_fn((w[1], w[0]), |_| rng.random_range(-1.0..1.0)),
                biases: Array1::from_shape_fn(w[1], |_| rng.random_range(-0.5..0.5)),
                activation: if last { output } else { hidden },
            }
        })
        .collect();
    Network::from_layers(layers).unwrap()
}

/// True when some pre-activation of a kinked activation (ReLU), or an MSLE
/// prediction, sits so close to its kink that a finite difference of step
/// `h` may straddle it.
pub fn near_kink(net: &Network, x: &Array2<f64>, kind: LossKind, h: f64) -> bool {
    let margin = 1e3 * h;
    for row in x.rows() {
        let trace = net.forward(row.as_slice().unwrap()).unwrap();
        for (layer, z) in net.layers().iter().zip(&trace.pre_activations) {
            if layer.activation == Activation::Relu && z.iter().any(|v| v.abs() < margin) {
                return true;
            }
        }
        if kind == LossKind::Msle && trace.prediction.abs() < margin {
            return true;
        }
    }
    false
}

/// Compares every analytic parameter gradient with a central difference of
/// step `h`. Returns the number of parameters checked, or a description of
/// the first mismatch beyond `rel` relative / `abs` absolute tolerance.
pub fn check_gradients(
    net: &Network,
    x: &Array2<f64>,
    y: &Array1<f64>,
    kind: LossKind,
    h: f64,
    rel: f64,
    abs: f64,
) -> Result<usize, String> {
    let grads = backprop(net, x.view(), y.view(), kind).map_err(|e| e.to_string())?;
    let analytic: Vec<f64> = grads.tensors().into_iter().flatten().copied().collect();
    let mut probe = net.clone();
    let n: usize = net.parameters().iter().map(|t| t.len()).sum();
    assert_eq!(n, analytic.len());
    let mut k = 0;
    for t in 0..net.parameters().len() {
        for j in 0..net.parameters()[t].len() {
            let orig = net.parameters()[t][j];
            probe.parameters_mut()[t][j] = orig + h;
            let up = batch_loss(&probe, x, y, kind);
            probe.parameters_mut()[t][j] = orig - h;
            let down = batch_loss(&probe, x, y, kind);
            probe.parameters_mut()[t][j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[k];
            if (a - numeric).abs() > abs + rel * a.abs().max(numeric.abs()) {
                return Err(format!(
                    "tensor {t} entry {j}: analytic {a:e} vs numeric {numeric:e}"
                ));
            }
            k += 1;
        }
    }
    Ok(k)
}
