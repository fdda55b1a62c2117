//! Python bindings: `import fatigue_ann`.
//!
//! Structured results (histories, CV reports, surfaces) come back as plain
//! dicts; inputs are lists of floats or lists of rows.

use std::path::PathBuf;

use fatigue_core::analysis;
use fatigue_core::dataset::{self, FilterConfig, N_FEATURES};
use fatigue_core::evaluation::{self, CvOptions};
use fatigue_core::model;
use fatigue_core::network::{self, Activation, NetworkConfig};
use fatigue_core::search::{self, GridSpec};
use fatigue_core::training::{self, Algorithm, OptimizerConfig, Split, TrainConfig};
use fatigue_core::Error;
use ndarray::{Array1, Array2};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Json(_) | Error::Config(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// Round-trips a serializable value through `json.loads`.
fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn rows_to_array(rows: &[Vec<f64>]) -> PyResult<Array2<f64>> {
    let width = rows.first().map_or(N_FEATURES, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), width), flat).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn feature_row(row: &[f64]) -> PyResult<[f64; N_FEATURES]> {
    row.try_into()
        .map_err(|_| PyValueError::new_err(format!("expected {N_FEATURES} inputs, got {}", row.len())))
}

#[pyclass(name = "Sample", from_py_object)]
#[derive(Clone)]
struct PySample {
    inner: dataset::Sample,
}

#[pymethods]
impl PySample {
    #[new]
    #[pyo3(signature = (binder_content, air_voids, strain, fatigue_life, temperature=20.0, frequency=10.0, source_id=String::new()))]
    fn new(
        binder_content: f64,
        air_voids: f64,
        strain: f64,
        fatigue_life: f64,
        temperature: f64,
        frequency: f64,
        source_id: String,
    ) -> Self {
        PySample {
            inner: dataset::Sample::new(binder_content, air_voids, strain, temperature, frequency, fatigue_life, source_id),
        }
    }

    #[getter]
    fn binder_content(&self) -> f64 {
        self.inner.binder_content
    }
    #[getter]
    fn air_voids(&self) -> f64 {
        self.inner.air_voids
    }
    #[getter]
    fn strain(&self) -> f64 {
        self.inner.strain
    }
    #[getter]
    fn temperature(&self) -> f64 {
        self.inner.temperature
    }
    #[getter]
    fn frequency(&self) -> f64 {
        self.inner.frequency
    }
    #[getter]
    fn fatigue_life(&self) -> f64 {
        self.inner.fatigue_life
    }
    #[getter]
    fn source_id(&self) -> String {
        self.inner.source_id.clone()
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "Sample(binder_content={}, air_voids={}, strain={}, fatigue_life={})",
            s.binder_content, s.air_voids, s.strain, s.fatigue_life
        )
    }
}

fn unwrap_samples(samples: &[PySample]) -> Vec<dataset::Sample> {
    samples.iter().map(|s| s.inner.clone()).collect()
}

fn wrap_samples(samples: Vec<dataset::Sample>) -> Vec<PySample> {
    samples.into_iter().map(|inner| PySample { inner }).collect()
}

#[pyfunction]
fn load_csv(path: PathBuf) -> PyResult<Vec<PySample>> {
    dataset::load_csv(path).map(wrap_samples).map_err(to_py)
}

#[pyfunction]
fn write_csv(path: PathBuf, samples: Vec<PySample>) -> PyResult<()> {
    let file = std::fs::File::create(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
    dataset::write_csv(file, &unwrap_samples(&samples)).map_err(to_py)
}

/// Condition split plus outlier filtering. Returns `(retained, rejected)`,
/// where each rejection is a `(sample, reason)` pair.
#[pyfunction]
#[pyo3(signature = (samples, nf_lower_bound=None, nf_upper_bound=None, z_threshold=None))]
fn prepare(
    samples: Vec<PySample>,
    nf_lower_bound: Option<f64>,
    nf_upper_bound: Option<f64>,
    z_threshold: Option<f64>,
) -> PyResult<(Vec<PySample>, Vec<(PySample, String)>)> {
    let mut cfg = FilterConfig::default();
    if let Some(v) = nf_lower_bound {
        cfg.nf_lower_bound = v;
    }
    if let Some(v) = nf_upper_bound {
        cfg.nf_upper_bound = v;
    }
    if let Some(v) = z_threshold {
        cfg.z_threshold = v;
    }
    let out = dataset::prepare(unwrap_samples(&samples), &cfg).map_err(to_py)?;
    let rejected = out
        .rejected
        .into_iter()
        .map(|r| (PySample { inner: r.sample }, r.reason.to_string()))
        .collect();
    Ok((wrap_samples(out.retained), rejected))
}

/// Fold index of every sample.
#[pyfunction]
fn kfold_split(n_samples: usize, n_folds: usize, seed: u64) -> PyResult<Vec<usize>> {
    dataset::kfold_split(n_samples, n_folds, seed)
        .map(|f| f.assignment)
        .map_err(to_py)
}

#[pyfunction]
fn r_squared(y_true: Vec<f64>, y_pred: Vec<f64>) -> PyResult<f64> {
    evaluation::r_squared(&y_true, &y_pred).map_err(to_py)
}

#[pyfunction]
fn compute_loss(kind: &str, y_true: Vec<f64>, y_pred: Vec<f64>) -> PyResult<f64> {
    training::compute_loss(parse(kind)?, &y_true, &y_pred).map_err(to_py)
}

#[pyclass(name = "Network", from_py_object)]
#[derive(Clone)]
struct PyNetwork {
    inner: network::Network,
}

#[pymethods]
impl PyNetwork {
    #[new]
    #[pyo3(signature = (hidden_layers=2, neurons=200, activation="relu", output_activation="linear", seed=0))]
    fn new(hidden_layers: usize, neurons: usize, activation: &str, output_activation: &str, seed: u64) -> PyResult<Self> {
        let cfg = NetworkConfig {
            n_hidden_layers: hidden_layers,
            neurons_per_hidden: neurons,
            hidden_activation: parse(activation)?,
            output_activation: parse(output_activation)?,
            seed,
            ..NetworkConfig::default()
        };
        network::Network::init(&cfg).map(|inner| PyNetwork { inner }).map_err(to_py)
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    fn predict_one(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.predict_one(&x).map_err(to_py)
    }

    fn forward_batch(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = rows_to_array(&rows)?;
        self.inner.forward_batch(x.view()).map(|p| p.to_vec()).map_err(to_py)
    }
}

/// Trains on already-scaled inputs. Returns `(network, history)`.
#[pyfunction]
#[pyo3(signature = (network, x_train, y_train, x_val, y_val, loss="msle", optimizer="rmsprop", learning_rate=1e-3, epochs=1000, batch_size=32, seed=0))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    network: &PyNetwork,
    x_train: Vec<Vec<f64>>,
    y_train: Vec<f64>,
    x_val: Vec<Vec<f64>>,
    y_val: Vec<f64>,
    loss: &str,
    optimizer: &str,
    learning_rate: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> PyResult<(PyNetwork, Bound<'py, PyAny>)> {
    let cfg = TrainConfig {
        loss: parse(loss)?,
        optimizer: OptimizerConfig {
            learning_rate,
            ..OptimizerConfig::new(parse::<Algorithm>(optimizer)?)
        },
        epochs,
        batch_size,
        seed,
        ..TrainConfig::default()
    };
    let (xt, xv) = (rows_to_array(&x_train)?, rows_to_array(&x_val)?);
    let (yt, yv) = (Array1::from(y_train), Array1::from(y_val));
    let net = network.inner.clone();
    let out = py
        .detach(|| training::train(net, Split::new(xt.view(), yt.view()), Split::new(xv.view(), yv.view()), &cfg))
        .map_err(to_py)?;
    let history = to_dict(py, &out.history)?;
    history.set_item("converged", out.converged)?;
    history.set_item("failure", out.failure)?;
    Ok((PyNetwork { inner: out.network }, history))
}

#[pyclass(name = "Model", from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: model::Model,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        model::Model::load(path).map(|inner| PyModel { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        model::Model::from_json(text).map(|inner| PyModel { inner }).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn network(&self) -> PyNetwork {
        PyNetwork { inner: self.inner.network.clone() }
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.provenance.converged
    }

    /// `[(cycles, extrapolated), ...]` for unscaled `[binder, voids, strain]` rows.
    fn predict(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<(f64, bool)>> {
        let inputs = rows.iter().map(|r| feature_row(r)).collect::<PyResult<Vec<_>>>()?;
        let preds = self.inner.predict(&inputs).map_err(to_py)?;
        Ok(preds.into_iter().map(|p| (p.cycles, p.extrapolated)).collect())
    }
}

/// K-fold cross-validation. Returns `(report, fold_models)`.
#[pyfunction]
#[pyo3(signature = (samples, hidden_layers=2, neurons=200, activation="relu", loss="msle", optimizer="rmsprop", learning_rate=1e-3, epochs=1000, folds=4, seed=42))]
#[allow(clippy::too_many_arguments)]
fn cross_validate<'py>(
    py: Python<'py>,
    samples: Vec<PySample>,
    hidden_layers: usize,
    neurons: usize,
    activation: &str,
    loss: &str,
    optimizer: &str,
    learning_rate: f64,
    epochs: usize,
    folds: usize,
    seed: u64,
) -> PyResult<(Bound<'py, PyAny>, Vec<PyModel>)> {
    let net = NetworkConfig {
        n_hidden_layers: hidden_layers,
        neurons_per_hidden: neurons,
        hidden_activation: parse::<Activation>(activation)?,
        ..NetworkConfig::default()
    };
    let cfg = TrainConfig {
        loss: parse(loss)?,
        optimizer: OptimizerConfig {
            learning_rate,
            ..OptimizerConfig::new(parse::<Algorithm>(optimizer)?)
        },
        epochs,
        ..TrainConfig::default()
    };
    let samples = unwrap_samples(&samples);
    let opts = CvOptions { n_folds: folds, seed, parallel: true };
    let run = py
        .detach(|| evaluation::cross_validate(&samples, &net, &cfg, opts))
        .map_err(to_py)?;
    let report = to_dict(py, &run.report)?;
    let pairs: Vec<(usize, usize, f64, f64)> = run
        .report
        .pairs()
        .map(|(f, p)| (f, p.sample_index, p.true_nf, p.pred_nf))
        .collect();
    report.set_item("pairs", pairs)?;
    let models = run.models.into_iter().map(|inner| PyModel { inner }).collect();
    Ok((report, models))
}

/// Prediction surface over binder content × air voids, plus its trends
/// (`trends` is None when too few cells are covered).
#[pyfunction]
#[pyo3(signature = (model, strain, resolution=analysis::DEFAULT_RESOLUTION, radius=analysis::DEFAULT_RADIUS))]
fn partial_dependence<'py>(
    py: Python<'py>,
    model: &PyModel,
    strain: f64,
    resolution: usize,
    radius: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let surface = analysis::partial_dependence(&model.inner, strain, resolution, radius).map_err(to_py)?;
    let out = to_dict(py, &surface)?;
    let trends = match analysis::qualitative_trends(&surface) {
        Ok(t) => Some(to_dict(py, &t)?),
        Err(_) => None,
    };
    out.set_item("trends", trends)?;
    Ok(out)
}

/// Number of configurations in the default hyperparameter study.
#[pyfunction]
fn study_grid_size() -> usize {
    search::enumerate_grid(&GridSpec::study(1, 0)).len()
}

#[pymodule]
fn fatigue_ann(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PySample>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(load_csv, m)?)?;
    m.add_function(wrap_pyfunction!(write_csv, m)?)?;
    m.add_function(wrap_pyfunction!(prepare, m)?)?;
    m.add_function(wrap_pyfunction!(kfold_split, m)?)?;
    m.add_function(wrap_pyfunction!(r_squared, m)?)?;
    m.add_function(wrap_pyfunction!(compute_loss, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    m.add_function(wrap_pyfunction!(partial_dependence, m)?)?;
    m.add_function(wrap_pyfunction!(study_grid_size, m)?)?;
    Ok(())
}
