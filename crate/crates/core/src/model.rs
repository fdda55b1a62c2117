//! Trained model files: network, input scaler, training inputs and
//! provenance in one JSON document.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{ScalerParams, N_FEATURES};
use crate::error::{Error, Result};
use crate::network::{Activation, Layer, Network, NetworkConfig};
use crate::training::TrainConfig;

pub const MODEL_FORMAT: &str = "fatigue-ann-model";
pub const MODEL_VERSION: u32 = 1;

/// Where a model came from; enough to rerun it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub seed: u64,
    pub train_config: Option<TrainConfig>,
    pub dataset_hash: Option<String>,
    pub fold: Option<usize>,
    pub n_folds: Option<usize>,
    pub best_epoch: usize,
    pub converged: bool,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub network_config: NetworkConfig,
    pub network: Network,
    pub scaler: ScalerParams,
    /// Unscaled `[binder, voids, strain]` of every training sample.
    pub training_inputs: Vec<[f64; N_FEATURES]>,
    pub provenance: Provenance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Prediction {
    /// Predicted cycles to failure, clamped to be non-negative.
    pub cycles: f64,
    /// Some input lies outside the training ranges.
    pub extrapolated: bool,
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    activation: Activation,
    rows: usize,
    cols: usize,
    /// Row-major `rows × cols`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    network_config: NetworkConfig,
    layers: Vec<LayerRecord>,
    scaler: ScalerParams,
    training_inputs: Vec<[f64; N_FEATURES]>,
    provenance: Provenance,
}

impl Model {
    pub fn new(
        network_config: NetworkConfig,
        network: Network,
        scaler: ScalerParams,
        training_inputs: Vec<[f64; N_FEATURES]>,
        provenance: Provenance,
    ) -> Self {
        Model {
            network_config,
            network,
            scaler,
            training_inputs,
            provenance,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            network_config: self.network_config.clone(),
            layers: self
                .network
                .layers()
                .iter()
                .map(|l| LayerRecord {
                    activation: l.activation,
                    rows: l.fan_out(),
                    cols: l.fan_in(),
                    weights: l.weights.iter().copied().collect(),
                    biases: l.biases.to_vec(),
                })
                .collect(),
            scaler: self.scaler,
            training_inputs: self.training_inputs.clone(),
            provenance: self.provenance.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::Model(format!("corrupt model file: {e}")))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Model(format!(
                "unsupported format `{}` version {}",
                file.format, file.version
            )));
        }
        let layers = file
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let weights = Array2::from_shape_vec((l.rows, l.cols), l.weights)
                    .map_err(|e| Error::Model(format!("layer {i}: {e}")))?;
                Ok(Layer {
                    weights,
                    biases: Array1::from(l.biases),
                    activation: l.activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let network =
            Network::from_layers(layers).map_err(|e| Error::Model(format!("invalid network: {e}")))?;
        if network.n_inputs() != N_FEATURES {
            return Err(Error::Model(format!(
                "network takes {} inputs, expected {N_FEATURES}",
                network.n_inputs()
            )));
        }
        Ok(Model {
            network_config: file.network_config,
            network,
            scaler: file.scaler,
            training_inputs: file.training_inputs,
            provenance: file.provenance,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Model::from_json(&text)
    }

    /// SHA-256 of the serialized model, hex encoded.
    pub fn content_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }

    /// Scales the raw input with the stored scaler, runs the network and
    /// clamps the result at zero.
    pub fn predict_one(&self, input: [f64; N_FEATURES]) -> Result<Prediction> {
        if !input.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("prediction inputs must be finite"));
        }
        let raw = self.network.predict_one(&self.scaler.scale(input))?;
        Ok(Prediction {
            cycles: raw.max(0.0),
            extrapolated: !self.scaler.contains(input),
        })
    }

    pub fn predict(&self, inputs: &[[f64; N_FEATURES]]) -> Result<Vec<Prediction>> {
        inputs.iter().map(|&x| self.predict_one(x)).collect()
    }

    /// Like [`Model::predict`] for rows of arbitrary length; rejects rows whose
    /// arity is not 3.
    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        rows.iter()
            .enumerate()
            .map(|(i, row)| {
                let x: [f64; N_FEATURES] = row.as_slice().try_into().map_err(|_| {
                    Error::invalid(format!(
                        "row {}: expected {N_FEATURES} inputs, got {}",
                        i + 1,
                        row.len()
                    ))
                })?;
                self.predict_one(x)
            })
            .collect()
    }
}
