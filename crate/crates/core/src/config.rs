//! Declarative run configuration (TOML). Unknown keys are rejected and every
//! field has a default, so the resolved configuration can be written back
//! out in full.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{DEFAULT_RADIUS, DEFAULT_RESOLUTION};
use crate::dataset::{BoundsMode, FilterConfig, ZScoreMode};
use crate::error::{Error, Result};
use crate::network::{Activation, NetworkConfig};
use crate::search::{GridAxis, GridSpec, SliceFix};
use crate::training::{Algorithm, CheckpointMetric, LossKind, OptimizerConfig, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub filter: FilterSection,
    pub cv: CvSection,
    pub network: NetworkSection,
    pub train: TrainSection,
    pub grid: GridSection,
    pub pdp: PdpSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            output_dir: PathBuf::from("out"),
            seed: 42,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            filter: FilterSection::default(),
            cv: CvSection::default(),
            network: NetworkSection::default(),
            train: TrainSection::default(),
            grid: GridSection::default(),
            pdp: PdpSection::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsKind {
    Fixed,
    Percentile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub nf_lower_bound: f64,
    pub nf_upper_bound: f64,
    pub z_threshold: f64,
    pub bounds: BoundsKind,
    pub lower_percentile: f64,
    pub upper_percentile: f64,
    pub z_mode: ZScoreMode,
}

impl Default for FilterSection {
    fn default() -> Self {
        let f = FilterConfig::default();
        FilterSection {
            nf_lower_bound: f.nf_lower_bound,
            nf_upper_bound: f.nf_upper_bound,
            z_threshold: f.z_threshold,
            bounds: BoundsKind::Fixed,
            lower_percentile: 3.0,
            upper_percentile: 90.0,
            z_mode: f.z_mode,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSection {
    pub folds: usize,
}

impl Default for CvSection {
    fn default() -> Self {
        CvSection { folds: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden_layers: usize,
    pub neurons: usize,
    pub activation: Activation,
    pub output_activation: Activation,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let n = NetworkConfig::default();
        NetworkSection {
            hidden_layers: n.n_hidden_layers,
            neurons: n.neurons_per_hidden,
            activation: n.hidden_activation,
            output_activation: n.output_activation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub loss: LossKind,
    pub optimizer: Algorithm,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub checkpoint: CheckpointMetric,
    pub divergence_patience: usize,
    /// Held-out fold used as the validation split by `train`.
    pub fold: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            loss: t.loss,
            optimizer: t.optimizer.algorithm,
            learning_rate: t.optimizer.learning_rate,
            beta1: t.optimizer.beta1,
            beta2: t.optimizer.beta2,
            rho: t.optimizer.rho,
            epsilon: t.optimizer.epsilon,
            epochs: t.epochs,
            batch_size: t.batch_size,
            checkpoint: t.checkpoint,
            divergence_patience: t.divergence_patience,
            fold: 0,
        }
    }
}

/// A one-dimensional grid cut: `vary` plus the fixed value of every other axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSpec {
    pub vary: GridAxis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<Algorithm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_layers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neurons: Option<usize>,
}

impl SliceSpec {
    pub fn new(vary: GridAxis, fix: SliceFix) -> Self {
        SliceSpec {
            vary,
            loss: fix.loss,
            optimizer: fix.optimizer,
            activation: fix.activation,
            hidden_layers: fix.hidden_layers,
            neurons: fix.neurons,
        }
    }

    pub fn fix(&self) -> SliceFix {
        SliceFix {
            loss: self.loss,
            optimizer: self.optimizer,
            activation: self.activation,
            hidden_layers: self.hidden_layers,
            neurons: self.neurons,
        }
    }

    /// File-name friendly label, e.g. `hidden_layers__mse_rmsprop_relu_n100`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(l) = self.loss {
            parts.push(l.to_string());
        }
        if let Some(o) = self.optimizer {
            parts.push(o.to_string());
        }
        if let Some(a) = self.activation {
            parts.push(a.to_string());
        }
        if let Some(h) = self.hidden_layers {
            parts.push(format!("h{h}"));
        }
        if let Some(n) = self.neurons {
            parts.push(format!("n{n}"));
        }
        format!("{}__{}", self.vary, parts.join("_"))
    }
}

/// Default grid epoch budget; far below the single-run default.
pub const DEFAULT_GRID_EPOCHS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub losses: Vec<LossKind>,
    pub optimizers: Vec<Algorithm>,
    pub activations: Vec<Activation>,
    pub hidden_layers: Vec<usize>,
    pub neurons: Vec<usize>,
    pub epochs: usize,
    pub slices: Vec<SliceSpec>,
}

fn slice(vary: GridAxis, fix: SliceFix) -> SliceSpec {
    SliceSpec::new(vary, fix)
}

impl Default for GridSection {
    fn default() -> Self {
        let s = GridSpec::study(DEFAULT_GRID_EPOCHS, 0);
        let fixed = |loss, optimizer, activation, hidden_layers, neurons| SliceFix {
            loss,
            optimizer,
            activation,
            hidden_layers,
            neurons,
        };
        let (mse, msle) = (Some(LossKind::Mse), Some(LossKind::Msle));
        let rms = Some(Algorithm::RmsProp);
        let relu = Some(Activation::Relu);
        GridSection {
            losses: s.losses,
            optimizers: s.optimizers,
            activations: s.activations,
            hidden_layers: s.hidden_layers,
            neurons: s.neurons,
            epochs: DEFAULT_GRID_EPOCHS,
            slices: vec![
                slice(GridAxis::HiddenLayers, fixed(mse, rms, relu, None, Some(100))),
                slice(GridAxis::Neurons, fixed(mse, rms, relu, Some(2), None)),
                slice(GridAxis::HiddenLayers, fixed(msle, rms, relu, None, Some(200))),
                slice(GridAxis::Neurons, fixed(msle, rms, relu, Some(2), None)),
                slice(GridAxis::Activation, fixed(mse, rms, None, Some(2), Some(100))),
                slice(GridAxis::Optimizer, fixed(mse, None, relu, Some(2), Some(100))),
                slice(GridAxis::Activation, fixed(msle, rms, None, Some(2), Some(200))),
                slice(GridAxis::Optimizer, fixed(msle, None, relu, Some(2), Some(200))),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdpSection {
    /// Microstrain levels, one surface each.
    pub strain_levels: Vec<f64>,
    pub resolution: usize,
    pub radius: f64,
}

impl Default for PdpSection {
    fn default() -> Self {
        PdpSection {
            strain_levels: vec![200.0, 400.0],
            resolution: DEFAULT_RESOLUTION,
            radius: DEFAULT_RADIUS,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        RunConfig::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn dataset_path(&self) -> Result<&Path> {
        let path = self
            .dataset
            .as_deref()
            .ok_or_else(|| Error::Config("no dataset path configured".into()))?;
        if !path.is_file() {
            return Err(Error::Config(format!("dataset `{}` does not exist", path.display())));
        }
        Ok(path)
    }

    pub fn filter_config(&self) -> Result<FilterConfig> {
        let f = &self.filter;
        let cfg = FilterConfig {
            nf_lower_bound: f.nf_lower_bound,
            nf_upper_bound: f.nf_upper_bound,
            z_threshold: f.z_threshold,
            bounds_mode: match f.bounds {
                BoundsKind::Fixed => BoundsMode::Fixed,
                BoundsKind::Percentile => BoundsMode::Percentile {
                    lower: f.lower_percentile,
                    upper: f.upper_percentile,
                },
            },
            z_mode: f.z_mode,
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Network settings; the weight-init seed is assigned per fold later.
    pub fn network_config(&self) -> Result<NetworkConfig> {
        let n = &self.network;
        let cfg = NetworkConfig {
            n_hidden_layers: n.hidden_layers,
            neurons_per_hidden: n.neurons,
            hidden_activation: n.activation,
            output_activation: n.output_activation,
            ..NetworkConfig::default()
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    fn optimizer_config(&self) -> OptimizerConfig {
        let t = &self.train;
        OptimizerConfig {
            algorithm: t.optimizer,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            rho: t.rho,
            epsilon: t.epsilon,
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let cfg = TrainConfig {
            loss: t.loss,
            optimizer: self.optimizer_config(),
            epochs: t.epochs,
            batch_size: t.batch_size,
            checkpoint: t.checkpoint,
            divergence_patience: t.divergence_patience,
            seed: 0,
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let g = &self.grid;
        let spec = GridSpec {
            losses: g.losses.clone(),
            optimizers: g.optimizers.clone(),
            activations: g.activations.clone(),
            hidden_layers: g.hidden_layers.clone(),
            neurons: g.neurons.clone(),
            epochs: g.epochs,
            folds: self.cv.folds,
            seed: self.seed,
            base: self.train_config()?,
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.filter_config()?;
        self.network_config()?;
        self.train_config()?;
        self.grid_spec()?;
        if self.cv.folds < 2 {
            return Err(Error::Config("cv.folds must be at least 2".into()));
        }
        if self.train.fold >= self.cv.folds {
            return Err(Error::Config(format!(
                "train.fold {} out of range for {} folds",
                self.train.fold, self.cv.folds
            )));
        }
        if self.pdp.resolution == 0 || !(self.pdp.radius > 0.0) {
            return Err(Error::Config("pdp.resolution and pdp.radius must be positive".into()));
        }
        Ok(())
    }
}
