//! Exhaustive hyperparameter grid with an append-only, resumable results
//! store (one JSON record per line).

use std::collections::HashMap;
use std::fmt;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::evaluation::{cross_validate, CvOptions};
use crate::network::{Activation, NetworkConfig};
use crate::seed;
use crate::training::{Algorithm, LossKind, OptimizerConfig, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub losses: Vec<LossKind>,
    pub optimizers: Vec<Algorithm>,
    pub activations: Vec<Activation>,
    pub hidden_layers: Vec<usize>,
    pub neurons: Vec<usize>,
    pub epochs: usize,
    pub folds: usize,
    pub seed: u64,
    /// Batch size, optimizer rates, checkpoint metric and patience shared by
    /// every configuration. Its loss, algorithm, epochs and seed are ignored.
    pub base: TrainConfig,
}

impl GridSpec {
    /// The full study grid: 2 losses × 3 optimizers × 3 activations × 4 depths × 5 widths.
    pub fn study(epochs: usize, seed: u64) -> Self {
        GridSpec {
            losses: vec![LossKind::Mse, LossKind::Msle],
            optimizers: vec![Algorithm::Adam, Algorithm::Nadam, Algorithm::RmsProp],
            activations: vec![Activation::Relu, Activation::Linear, Activation::Sigmoid],
            hidden_layers: vec![1, 2, 3, 4],
            neurons: vec![10, 50, 100, 150, 200],
            epochs,
            folds: 4,
            seed,
            base: TrainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.losses.is_empty()
            || self.optimizers.is_empty()
            || self.activations.is_empty()
            || self.hidden_layers.is_empty()
            || self.neurons.is_empty()
        {
            return Err(Error::invalid("every grid axis needs at least one value"));
        }
        if self.hidden_layers.contains(&0) || self.neurons.contains(&0) {
            return Err(Error::invalid("grid layer sizes must be positive"));
        }
        if self.epochs == 0 || self.folds < 2 {
            return Err(Error::invalid("grid needs epochs >= 1 and folds >= 2"));
        }
        Ok(())
    }

    pub fn n_configs(&self) -> usize {
        self.losses.len()
            * self.optimizers.len()
            * self.activations.len()
            * self.hidden_layers.len()
            * self.neurons.len()
    }
}

/// One grid configuration.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridPoint {
    /// Position in enumeration order.
    pub index: usize,
    pub loss: LossKind,
    pub optimizer: Algorithm,
    pub activation: Activation,
    pub hidden_layers: usize,
    pub neurons: usize,
}

impl GridPoint {
    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            n_hidden_layers: self.hidden_layers,
            neurons_per_hidden: self.neurons,
            hidden_activation: self.activation,
            ..NetworkConfig::default()
        }
    }

    pub fn train_config(&self, spec: &GridSpec) -> TrainConfig {
        TrainConfig {
            loss: self.loss,
            optimizer: OptimizerConfig {
                algorithm: self.optimizer,
                ..spec.base.optimizer
            },
            epochs: spec.epochs,
            ..spec.base.clone()
        }
    }

    pub fn configs(&self, spec: &GridSpec) -> (NetworkConfig, TrainConfig) {
        (self.network_config(), self.train_config(spec))
    }

    pub fn n_params(&self) -> usize {
        self.network_config().n_params()
    }

    /// Stable identifier of this configuration under `spec` (16 hex chars).
    pub fn hash(&self, spec: &GridSpec) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            network: NetworkConfig,
            train: TrainConfig,
            folds: usize,
            seed: u64,
            _marker: &'a str,
        }
        let key = Key {
            network: self.network_config(),
            train: self.train_config(spec),
            folds: spec.folds,
            seed: spec.seed,
            _marker: "grid-point",
        };
        let text = serde_json::to_string(&key).expect("config serializes");
        hex::encode(&Sha256::digest(text.as_bytes())[..8])
    }

    pub fn axis_value(&self, axis: GridAxis) -> String {
        match axis {
            GridAxis::Loss => self.loss.to_string(),
            GridAxis::Optimizer => self.optimizer.to_string(),
            GridAxis::Activation => self.activation.to_string(),
            GridAxis::HiddenLayers => self.hidden_layers.to_string(),
            GridAxis::Neurons => self.neurons.to_string(),
        }
    }
}

/// Cartesian product in lexicographic order: loss, optimizer, activation,
/// hidden layers, neurons (last varies fastest).
pub fn enumerate_grid(spec: &GridSpec) -> Vec<GridPoint> {
    let mut out = Vec::with_capacity(spec.n_configs());
    for &loss in &spec.losses {
        for &optimizer in &spec.optimizers {
            for &activation in &spec.activations {
                for &hidden_layers in &spec.hidden_layers {
                    for &neurons in &spec.neurons {
                        out.push(GridPoint {
                            index: out.len(),
                            loss,
                            optimizer,
                            activation,
                            hidden_layers,
                            neurons,
                        });
                    }
                }
            }
        }
    }
    out
}

/// One line of the results store.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub config_hash: String,
    pub point: GridPoint,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub epochs: usize,
    pub folds: usize,
    pub fold_r2: Vec<Option<f64>>,
    pub mean_r2: Option<f64>,
    pub n_converged: usize,
    pub n_params: usize,
    pub error: Option<String>,
    pub wall_time_secs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    /// One record per configuration, in enumeration order.
    pub records: Vec<GridRecord>,
    /// Indices into `records`, best first. Configurations without a mean R²
    /// are left out.
    pub ranking: Vec<usize>,
}

fn evaluate_point(samples: &[Sample], spec: &GridSpec, point: &GridPoint) -> GridRecord {
    let config_hash = point.hash(spec);
    let seed = seed::derive(
        spec.seed,
        "config",
        u64::from_str_radix(&config_hash, 16).expect("hex hash"),
    );
    let (network, train) = point.configs(spec);
    let start = Instant::now();
    let opts = CvOptions {
        n_folds: spec.folds,
        seed,
        parallel: true,
    };
    let (fold_r2, mean_r2, n_converged, error) =
        match cross_validate(samples, &network, &train, opts) {
            Ok(run) => (
                run.report.folds.iter().map(|f| f.r_squared).collect(),
                run.report.mean_r_squared,
                run.report.n_converged,
                None,
            ),
            Err(e) => (Vec::new(), None, 0, Some(e.to_string())),
        };
    GridRecord {
        config_hash,
        n_params: point.n_params(),
        point: point.clone(),
        network,
        train,
        seed,
        epochs: spec.epochs,
        folds: spec.folds,
        fold_r2,
        mean_r2,
        n_converged,
        error,
        wall_time_secs: start.elapsed().as_secs_f64(),
    }
}

/// Records already present in a results store, keyed by config hash. A
/// truncated final line (interrupted write) is ignored.
pub fn read_store(path: &Path) -> Result<HashMap<String, GridRecord>> {
    let mut out = HashMap::new();
    if !path.exists() {
        return Ok(out);
    }
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<GridRecord>(line) {
            Ok(r) => {
                out.insert(r.config_hash.clone(), r);
            }
            Err(_) if i == last => {}
            Err(e) => {
                return Err(Error::invalid(format!(
                    "{}: line {}: {e}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

/// Sorts by mean R² descending, then fewer parameters, then enumeration order.
pub fn rank(records: &[GridRecord]) -> Vec<usize> {
    let mut ranked: Vec<usize> = (0..records.len())
        .filter(|&i| records[i].mean_r2.is_some())
        .collect();
    ranked.sort_by(|&a, &b| {
        let (ra, rb) = (&records[a], &records[b]);
        rb.mean_r2
            .unwrap()
            .total_cmp(&ra.mean_r2.unwrap())
            .then(ra.n_params.cmp(&rb.n_params))
            .then(ra.point.index.cmp(&rb.point.index))
    });
    ranked
}

/// Cross-validates every configuration not already in `store`, appending each
/// record as soon as it completes. `workers` bounds the thread count.
pub fn run_grid(
    samples: &[Sample],
    spec: &GridSpec,
    store: &Path,
    workers: usize,
) -> Result<GridResult> {
    spec.validate()?;
    let points = enumerate_grid(spec);
    let mut done = read_store(store)?;
    let pending: Vec<&GridPoint> = points
        .iter()
        .filter(|p| !done.contains_key(&p.hash(spec)))
        .collect();

    if !pending.is_empty() {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(store)
            .map_err(|e| Error::io(store, e))?;
        let writer = Mutex::new(file);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        let fresh: Vec<GridRecord> = pool.install(|| {
            pending
                .par_iter()
                .map(|p| {
                    let record = evaluate_point(samples, spec, p);
                    let line = serde_json::to_string(&record)?;
                    let mut f = writer.lock().expect("store writer poisoned");
                    writeln!(f, "{line}")
                        .and_then(|_| f.flush())
                        .map_err(|e| Error::io(store, e))?;
                    Ok(record)
                })
                .collect::<Result<_>>()
        })?;
        for r in fresh {
            done.insert(r.config_hash.clone(), r);
        }
    }

    let records: Vec<GridRecord> = points
        .iter()
        .map(|p| {
            let mut r = done.remove(&p.hash(spec)).expect("every point evaluated");
            r.point.index = p.index;
            r
        })
        .collect();
    let ranking = rank(&records);
    Ok(GridResult { records, ranking })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridAxis {
    Loss,
    Optimizer,
    Activation,
    HiddenLayers,
    Neurons,
}

impl fmt::Display for GridAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridAxis::Loss => "loss",
            GridAxis::Optimizer => "optimizer",
            GridAxis::Activation => "activation",
            GridAxis::HiddenLayers => "hidden_layers",
            GridAxis::Neurons => "neurons",
        })
    }
}

impl FromStr for GridAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loss" => Ok(GridAxis::Loss),
            "optimizer" => Ok(GridAxis::Optimizer),
            "activation" => Ok(GridAxis::Activation),
            "hidden_layers" | "n_h" => Ok(GridAxis::HiddenLayers),
            "neurons" | "n_neur" => Ok(GridAxis::Neurons),
            other => Err(Error::invalid(format!("unknown grid axis `{other}`"))),
        }
    }
}

/// Values held fixed in a slice; the varied axis must be `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceFix {
    pub loss: Option<LossKind>,
    pub optimizer: Option<Algorithm>,
    pub activation: Option<Activation>,
    pub hidden_layers: Option<usize>,
    pub neurons: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SliceRow {
    pub axis_value: String,
    pub mean_r2: Option<f64>,
    pub n_converged: usize,
}

/// One-dimensional cut through the grid along `vary`.
pub fn slice_report(result: &GridResult, vary: GridAxis, fix: &SliceFix) -> Result<Vec<SliceRow>> {
    let fixed = [
        (GridAxis::Loss, fix.loss.is_some()),
        (GridAxis::Optimizer, fix.optimizer.is_some()),
        (GridAxis::Activation, fix.activation.is_some()),
        (GridAxis::HiddenLayers, fix.hidden_layers.is_some()),
        (GridAxis::Neurons, fix.neurons.is_some()),
    ];
    for (axis, present) in fixed {
        if axis == vary && present {
            return Err(Error::invalid(format!("axis `{axis}` is varied and cannot be fixed")));
        }
        if axis != vary && !present {
            return Err(Error::invalid(format!("axis `{axis}` must be fixed")));
        }
    }
    let matches = |p: &GridPoint| {
        fix.loss.is_none_or(|v| v == p.loss)
            && fix.optimizer.is_none_or(|v| v == p.optimizer)
            && fix.activation.is_none_or(|v| v == p.activation)
            && fix.hidden_layers.is_none_or(|v| v == p.hidden_layers)
            && fix.neurons.is_none_or(|v| v == p.neurons)
    };
    let rows: Vec<SliceRow> = result
        .records
        .iter()
        .filter(|r| matches(&r.point))
        .map(|r| SliceRow {
            axis_value: r.point.axis_value(vary),
            mean_r2: r.mean_r2,
            n_converged: r.n_converged,
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::invalid("requested fixed point is not in the grid"));
    }
    Ok(rows)
}

/// `axis_value,mean_r2,n_converged`; an undefined mean is left empty.
pub fn write_slice_csv<W: Write>(writer: W, rows: &[SliceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["axis_value", "mean_r2", "n_converged"])?;
    for r in rows {
        w.write_record([
            r.axis_value.clone(),
            r.mean_r2.map(|v| v.to_string()).unwrap_or_default(),
            r.n_converged.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<slice>", e))?;
    Ok(())
}

/// Ranked table of every configuration; unranked ones follow with an empty rank.
pub fn write_ranking_csv<W: Write>(writer: W, result: &GridResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "rank",
        "config_hash",
        "loss",
        "optimizer",
        "activation",
        "hidden_layers",
        "neurons",
        "mean_r2",
        "n_converged",
        "n_params",
    ])?;
    let unranked = (0..result.records.len()).filter(|i| !result.ranking.contains(i));
    let order = result
        .ranking
        .iter()
        .copied()
        .enumerate()
        .map(|(k, i)| (Some(k + 1), i))
        .chain(unranked.map(|i| (None, i)));
    for (rank, i) in order {
        let r = &result.records[i];
        w.write_record([
            rank.map(|k| k.to_string()).unwrap_or_default(),
            r.config_hash.clone(),
            r.point.loss.to_string(),
            r.point.optimizer.to_string(),
            r.point.activation.to_string(),
            r.point.hidden_layers.to_string(),
            r.point.neurons.to_string(),
            r.mean_r2.map(|v| v.to_string()).unwrap_or_default(),
            r.n_converged.to_string(),
            r.n_params.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<ranking>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn study_grid_has_360_unique_points() {
        let spec = GridSpec::study(100, 0);
        let points = enumerate_grid(&spec);
        assert_eq!(points.len(), 360);
        assert_eq!(spec.n_configs(), 360);
        let unique: HashSet<_> = points
            .iter()
            .map(|p| (p.loss, p.optimizer, p.activation, p.hidden_layers, p.neurons))
            .collect();
        assert_eq!(unique.len(), 360);
        let hashes: HashSet<_> = points.iter().map(|p| p.hash(&spec)).collect();
        assert_eq!(hashes.len(), 360);
        let selected = points
            .iter()
            .filter(|p| {
                p.loss == LossKind::Msle
                    && p.optimizer == Algorithm::RmsProp
                    && p.activation == Activation::Relu
                    && p.hidden_layers == 2
                    && p.neurons == 200
            })
            .count();
        assert_eq!(selected, 1);
        assert!(points.iter().enumerate().all(|(i, p)| p.index == i));
    }

    #[test]
    fn singleton_grid() {
        let spec = GridSpec {
            losses: vec![LossKind::Mse],
            optimizers: vec![Algorithm::Adam],
            activations: vec![Activation::Tanh],
            hidden_layers: vec![1],
            neurons: vec![4],
            ..GridSpec::study(10, 0)
        };
        let points = enumerate_grid(&spec);
        assert_eq!(points.len(), 1);
        let (net, train) = points[0].configs(&spec);
        assert_eq!(net.hidden_activation, Activation::Tanh);
        assert_eq!(train.optimizer.algorithm, Algorithm::Adam);
        assert_eq!(train.epochs, 10);
    }

    #[test]
    fn hash_depends_on_budget_and_seed() {
        let a = GridSpec::study(10, 0);
        let p = &enumerate_grid(&a)[0];
        assert_eq!(p.hash(&a), p.hash(&a.clone()));
        assert_ne!(p.hash(&a), p.hash(&GridSpec::study(11, 0)));
        assert_ne!(p.hash(&a), p.hash(&GridSpec::study(10, 1)));
    }

    fn record(index: usize, mean: Option<f64>, neurons: usize) -> GridRecord {
        let spec = GridSpec::study(1, 0);
        let point = GridPoint {
            index,
            neurons,
            ..enumerate_grid(&spec)[0].clone()
        };
        GridRecord {
            config_hash: format!("{index:016x}"),
            n_params: point.n_params(),
            network: point.network_config(),
            train: point.train_config(&spec),
            point,
            seed: 0,
            epochs: 1,
            folds: 4,
            fold_r2: vec![],
            mean_r2: mean,
            n_converged: usize::from(mean.is_some()) * 4,
            error: None,
            wall_time_secs: 0.0,
        }
    }

    #[test]
    fn ranking_breaks_ties_by_size_then_order() {
        let records = vec![
            record(0, Some(0.5), 50),
            record(1, None, 10),
            record(2, Some(0.8), 200),
            record(3, Some(0.8), 10),
            record(4, Some(0.5), 50),
        ];
        assert_eq!(rank(&records), vec![3, 2, 0, 4]);
    }

    #[test]
    fn slice_requires_fixed_axes() {
        let spec = GridSpec {
            neurons: vec![10, 50],
            ..GridSpec::study(1, 0)
        };
        let records: Vec<GridRecord> = enumerate_grid(&spec)
            .into_iter()
            .map(|p| GridRecord {
                mean_r2: Some(p.index as f64),
                ..record(p.index, None, 0)
            })
            .map(|mut r| {
                r.point = enumerate_grid(&spec)[r.point.index].clone();
                r
            })
            .collect();
        let result = GridResult {
            ranking: rank(&records),
            records,
        };
        let fix = SliceFix {
            loss: Some(LossKind::Mse),
            optimizer: Some(Algorithm::RmsProp),
            activation: Some(Activation::Relu),
            neurons: Some(50),
            hidden_layers: None,
        };
        let rows = slice_report(&result, GridAxis::HiddenLayers, &fix).unwrap();
        assert_eq!(
            rows.iter().map(|r| r.axis_value.as_str()).collect::<Vec<_>>(),
            vec!["1", "2", "3", "4"]
        );
        assert!(slice_report(&result, GridAxis::Neurons, &fix).is_err());
        let missing = SliceFix {
            neurons: Some(100),
            ..fix.clone()
        };
        assert!(slice_report(&result, GridAxis::HiddenLayers, &missing).is_err());
    }
}
