//! RMSprop, Adam and Nadam update rules over flat parameter tensors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;

use super::backprop::Gradients;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Adam,
    Nadam,
    RmsProp,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Adam => "adam",
            Algorithm::Nadam => "nadam",
            Algorithm::RmsProp => "rmsprop",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(Algorithm::Adam),
            "nadam" => Ok(Algorithm::Nadam),
            "rmsprop" => Ok(Algorithm::RmsProp),
            other => Err(Error::invalid(format!("unknown optimizer `{other}`"))),
        }
    }
}

/// Optimizer choice plus its hyperparameters. `beta1`/`beta2` are read by
/// Adam and Nadam, `rho` by RMSprop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        OptimizerConfig {
            algorithm,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            rho: 0.9,
            epsilon: 1e-7,
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if !(open_unit(self.beta1) && open_unit(self.beta2) && open_unit(self.rho)) {
            return Err(Error::invalid("beta1, beta2 and rho must lie in (0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        Ok(())
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::new(Algorithm::RmsProp)
    }
}

/// Moment accumulators mirroring the parameter tensors, plus the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    t: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(sizes: &[usize]) -> Self {
        OptimizerState {
            t: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_network(net: &Network) -> Self {
        let sizes: Vec<usize> = net.parameters().iter().map(|p| p.len()).collect();
        OptimizerState::new(&sizes)
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second
    }

    /// One update of every tensor in `params` from the matching `grads`.
    pub fn step(
        &mut self,
        cfg: &OptimizerConfig,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
    ) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first[k].len() || g.len() != self.first[k].len() {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {k}: state {} vs parameters {} vs gradients {}",
                    self.first[k].len(),
                    p.len(),
                    g.len()
                )));
            }
        }

        self.t += 1;
        let t = self.t as i32;
        let lr = cfg.learning_rate;
        let eps = cfg.epsilon;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let bias1 = 1.0 - b1.powi(t);
        let bias2 = 1.0 - b2.powi(t);

        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            match cfg.algorithm {
                Algorithm::RmsProp => {
                    for i in 0..p.len() {
                        v[i] = cfg.rho * v[i] + (1.0 - cfg.rho) * g[i] * g[i];
                        p[i] -= lr * g[i] / (v[i].sqrt() + eps);
                    }
                }
                Algorithm::Adam => {
                    for i in 0..p.len() {
                        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                        let m_hat = m[i] / bias1;
                        let v_hat = v[i] / bias2;
                        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
                Algorithm::Nadam => {
                    for i in 0..p.len() {
                        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                        let m_hat = m[i] / bias1;
                        let v_hat = v[i] / bias2;
                        let nesterov = b1 * m_hat + (1.0 - b1) / bias1 * g[i];
                        p[i] -= lr * nesterov / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }

    /// Updates a network in place.
    pub fn apply(&mut self, cfg: &OptimizerConfig, net: &mut Network, grads: &Gradients) -> Result<()> {
        let grad_tensors = grads.tensors();
        let mut params = net.parameters_mut();
        self.step(cfg, &mut params, &grad_tensors)
    }
}
