//! Command-line front end: `prepare`, `train`, `cv`, `grid`, `pdp`, `predict`.
//!
//! Exit codes: 0 success, 1 I/O or internal failure, 2 configuration error,
//! 3 data error, 4 training did not converge.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{self, PdpSurface};
use crate::config::{RunConfig, SliceSpec};
use crate::dataset::{self, FilterOutcome};
use crate::error::{Error, Result};
use crate::evaluation::{self, CvOptions};
use crate::model::Model;
use crate::network::NetworkConfig;
use crate::search::{self, GridAxis, SliceFix};
use crate::training::{self, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "fatigue", version, about = "Fatigue-life prediction for asphalt mixtures")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dataset CSV; overrides `dataset` in the config.
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter the dataset and write retained and rejected rows.
    Prepare,
    /// Train one model, validating on one held-out fold.
    Train {
        #[arg(long)]
        fold: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// K-fold cross-validation of the configured network.
    Cv {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Cross-validate every grid configuration (resumable).
    Grid {
        #[arg(long)]
        epochs: Option<usize>,
        /// Extra slice along this axis, other axes fixed at the configured network.
        #[arg(long)]
        vary: Vec<GridAxis>,
    },
    /// Prediction surfaces over binder content and air voids.
    Pdp {
        #[arg(long)]
        model: PathBuf,
        /// Microstrain level; repeatable. Defaults to the configured levels.
        #[arg(long = "strain")]
        strains: Vec<f64>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Predict fatigue life for a CSV of binder_content, air_voids, strain_microstrain.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to `<out>/predictions.csv`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// How a successful command finished.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    NotConverged,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::MalformedRow { .. }
        | Error::Header { .. }
        | Error::NonPositiveFatigueLife(_)
        | Error::EmptyAfterFiltering
        | Error::InvalidInput(_)
        | Error::ShapeMismatch(_)
        | Error::DegenerateVariance
        | Error::StrainExtrapolation { .. }
        | Error::TrendUndefined(_)
        | Error::Model(_)
        | Error::Csv(_) => EXIT_DATA,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are reported on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(Status::Ok) => EXIT_OK,
        Ok(Status::NotConverged) => {
            eprintln!("warning: training did not converge");
            EXIT_NOT_CONVERGED
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Loads the config file (or defaults) and applies command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &cli.dataset {
        cfg.dataset = Some(d.clone());
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    match &cli.command {
        Command::Train { fold, epochs } => {
            if let Some(f) = fold {
                cfg.train.fold = *f;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
        }
        Command::Cv { epochs: Some(e) } => cfg.train.epochs = *e,
        Command::Grid { epochs: Some(e), .. } => cfg.grid.epochs = *e,
        Command::Pdp { resolution, radius, .. } => {
            if let Some(r) = resolution {
                cfg.pdp.resolution = *r;
            }
            if let Some(r) = radius {
                cfg.pdp.radius = *r;
            }
        }
        _ => {}
    }
    if cfg.workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<Status> {
    let cfg = resolve_config(&cli)?;
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_resolved_config(&out, &cfg)?;
    match cli.command {
        Command::Prepare => cmd_prepare(&cfg, &out),
        Command::Train { .. } => cmd_train(&cfg, &out),
        Command::Cv { .. } => cmd_cv(&cfg, &out),
        Command::Grid { vary, .. } => cmd_grid(&cfg, &out, &vary),
        Command::Pdp { model, strains, .. } => cmd_pdp(&cfg, &out, &model, &strains),
        Command::Predict { model, input, output } => {
            let output = output.unwrap_or_else(|| out.join("predictions.csv"));
            cmd_predict(&model, &input, &output)
        }
    }
}

fn write_resolved_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let text = format!("# {}\n{}", crate::TOOL_VERSION, cfg.to_toml()?);
    let path = dir.join("resolved_config.toml");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Prefixes data errors with the file they came from.
fn with_path(path: &Path, err: Error) -> Error {
    match err {
        Error::MalformedRow { row, column, message } => Error::MalformedRow {
            row,
            column,
            message: format!("{}: {message}", path.display()),
        },
        Error::NonPositiveFatigueLife(row) => {
            Error::invalid(format!("{}: non-positive fatigue life at row {row}", path.display()))
        }
        other => other,
    }
}

/// Loads and filters the configured dataset.
pub fn load_prepared(cfg: &RunConfig) -> Result<FilterOutcome> {
    let path = cfg.dataset_path()?;
    let raw = dataset::load_csv(path).map_err(|e| with_path(path, e))?;
    dataset::prepare(raw, &cfg.filter_config()?)
}

#[derive(Serialize)]
struct FilterSummary<'a> {
    dataset: &'a Path,
    dataset_hash: String,
    n_input: usize,
    n_retained: usize,
    n_rejected: usize,
    nf_bounds: (f64, f64),
    rejected_by_reason: std::collections::BTreeMap<String, usize>,
}

fn cmd_prepare(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let outcome = load_prepared(cfg)?;
    dataset::write_csv(create(&out.join("retained.csv"))?, &outcome.retained)?;
    dataset::write_rejections(create(&out.join("rejected.csv"))?, &outcome.rejected)?;
    let mut by_reason = std::collections::BTreeMap::new();
    for r in &outcome.rejected {
        let key = match &r.reason {
            dataset::RejectReason::ZScore { variable, .. } => format!("zscore:{}", variable.name()),
            other => format!("{other:?}"),
        };
        *by_reason.entry(key).or_insert(0) += 1;
    }
    write_json(
        &out.join("filter_summary.json"),
        &FilterSummary {
            dataset: cfg.dataset_path()?,
            dataset_hash: dataset::content_hash(&outcome.retained),
            n_input: outcome.retained.len() + outcome.rejected.len(),
            n_retained: outcome.retained.len(),
            n_rejected: outcome.rejected.len(),
            nf_bounds: outcome.bounds,
            rejected_by_reason: by_reason,
        },
    )?;
    println!(
        "retained {} of {} samples",
        outcome.retained.len(),
        outcome.retained.len() + outcome.rejected.len()
    );
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct TrainSummary {
    fold: usize,
    n_folds: usize,
    n_train: usize,
    n_validation: usize,
    converged: bool,
    failure: Option<String>,
    best_epoch: usize,
    epochs_run: usize,
    best_train_loss: Option<f64>,
    best_val_loss: Option<f64>,
    validation_r_squared: Option<f64>,
    wall_time_secs: f64,
}

fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let samples = load_prepared(cfg)?.retained;
    let n_folds = cfg.cv.folds;
    let fold = cfg.train.fold;
    let folds = dataset::kfold_split(samples.len(), n_folds, evaluation::kfold_seed(cfg.seed))?;
    let train = dataset::select(&samples, &folds.train_indices(fold));
    let val = dataset::select(&samples, &folds.test_indices(fold));
    let (init_seed, shuffle_seed) = evaluation::fold_seeds(cfg.seed, fold);
    let net_cfg = NetworkConfig {
        seed: init_seed,
        ..cfg.network_config()?
    };
    let train_cfg = TrainConfig {
        seed: shuffle_seed,
        ..cfg.train_config()?
    };
    let (mut model, history) = evaluation::fit_model(&train, &val, &net_cfg, &train_cfg)?;
    model.provenance.seed = cfg.seed;
    model.provenance.fold = Some(fold);
    model.provenance.n_folds = Some(n_folds);
    model.provenance.dataset_hash = Some(dataset::content_hash(&samples));
    model.save(out.join("model.json"))?;
    training::write_history_csv(create(&out.join("history.csv"))?, &history)?;

    let converged = model.provenance.converged;
    let best = history.best_epoch.checked_sub(1);
    let validation_r_squared = if converged {
        let pred: Vec<f64> = val
            .iter()
            .map(|s| model.predict_one(s.features()).map(|p| p.cycles))
            .collect::<Result<_>>()?;
        let y: Vec<f64> = val.iter().map(|s| s.fatigue_life).collect();
        evaluation::r_squared(&y, &pred).ok()
    } else {
        None
    };
    write_json(
        &out.join("train_summary.json"),
        &TrainSummary {
            fold,
            n_folds,
            n_train: train.len(),
            n_validation: val.len(),
            converged,
            failure: model.provenance.failure.clone(),
            best_epoch: history.best_epoch,
            epochs_run: history.epochs(),
            best_train_loss: best.map(|b| history.train_loss[b]),
            best_val_loss: best.map(|b| history.val_loss[b]),
            validation_r_squared,
            wall_time_secs: history.wall_time_secs,
        },
    )?;
    match validation_r_squared {
        Some(r2) => println!("best epoch {}, validation R2 {r2:.4}", history.best_epoch),
        None => println!("best epoch {}", history.best_epoch),
    }
    Ok(if converged { Status::Ok } else { Status::NotConverged })
}

fn cmd_cv(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let samples = load_prepared(cfg)?.retained;
    let opts = CvOptions {
        n_folds: cfg.cv.folds,
        seed: cfg.seed,
        parallel: cfg.workers > 1,
    };
    let pool = thread_pool(cfg.workers)?;
    let run = pool.install(|| {
        evaluation::cross_validate(&samples, &cfg.network_config()?, &cfg.train_config()?, opts)
    })?;
    write_json(&out.join("cv_report.json"), &run.report)?;
    evaluation::write_true_vs_pred_csv(create(&out.join("true_vs_pred.csv"))?, &run.report)?;
    for (k, (model, history)) in run.models.iter().zip(&run.histories).enumerate() {
        let dir = out.join(format!("fold_{k}"));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        model.save(dir.join("model.json"))?;
        training::write_history_csv(create(&dir.join("history.csv"))?, history)?;
    }
    let r = &run.report;
    for f in &r.folds {
        println!("fold {}: R2 {}", f.fold_index, fmt_opt(f.r_squared));
    }
    println!(
        "mean R2 {}, pooled R2 {}, {} of {} folds converged",
        fmt_opt(r.mean_r_squared),
        fmt_opt(r.pooled_r_squared),
        r.n_converged,
        r.n_folds
    );
    Ok(if r.n_converged == 0 { Status::NotConverged } else { Status::Ok })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))
}

#[derive(Serialize)]
struct SliceOutput<'a> {
    slice: &'a SliceSpec,
    file: Option<String>,
    rows: Vec<search::SliceRow>,
    error: Option<String>,
}

fn cmd_grid(cfg: &RunConfig, out: &Path, vary: &[GridAxis]) -> Result<Status> {
    let samples = load_prepared(cfg)?.retained;
    let spec = cfg.grid_spec()?;
    let store = out.join("grid_results.jsonl");
    let already = search::read_store(&store)?.len();
    eprintln!(
        "grid: {} configurations, {} already stored, {} epochs each",
        spec.n_configs(),
        already,
        spec.epochs
    );
    let result = search::run_grid(&samples, &spec, &store, cfg.workers)?;
    search::write_ranking_csv(create(&out.join("grid_ranking.csv"))?, &result)?;

    let mut slices = cfg.grid.slices.clone();
    for &axis in vary {
        let n = &cfg.network;
        let t = &cfg.train;
        let mut fix = SliceFix {
            loss: Some(t.loss),
            optimizer: Some(t.optimizer),
            activation: Some(n.activation),
            hidden_layers: Some(n.hidden_layers),
            neurons: Some(n.neurons),
        };
        match axis {
            GridAxis::Loss => fix.loss = None,
            GridAxis::Optimizer => fix.optimizer = None,
            GridAxis::Activation => fix.activation = None,
            GridAxis::HiddenLayers => fix.hidden_layers = None,
            GridAxis::Neurons => fix.neurons = None,
        }
        slices.push(SliceSpec::new(axis, fix));
    }
    let dir = out.join("slices");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut index = Vec::new();
    for s in &slices {
        match search::slice_report(&result, s.vary, &s.fix()) {
            Ok(rows) => {
                let file = format!("{}.csv", s.label());
                search::write_slice_csv(create(&dir.join(&file))?, &rows)?;
                index.push(SliceOutput { slice: s, file: Some(file), rows, error: None });
            }
            Err(e) => {
                eprintln!("warning: slice {} skipped: {e}", s.label());
                index.push(SliceOutput { slice: s, file: None, rows: Vec::new(), error: Some(e.to_string()) });
            }
        }
    }
    write_json(&dir.join("slices.json"), &index)?;

    if let Some(&best) = result.ranking.first() {
        let r = &result.records[best];
        println!(
            "best: {} {} {} {}x{} mean R2 {:.4}",
            r.point.loss,
            r.point.optimizer,
            r.point.activation,
            r.point.hidden_layers,
            r.point.neurons,
            r.mean_r2.unwrap_or(f64::NAN)
        );
    } else {
        println!("no configuration produced a mean R2");
    }
    Ok(Status::Ok)
}

/// Strain level as used in file names: `200`, `412.5`.
fn strain_tag(strain: f64) -> String {
    format!("{strain}")
}

#[derive(Serialize)]
struct SurfaceHeader<'a> {
    model: &'a Path,
    model_hash: String,
    strain_level: f64,
    resolution: usize,
    coverage_radius: f64,
    binder_range: (f64, f64),
    voids_range: (f64, f64),
    n_covered: usize,
    trends: Option<analysis::TrendSummary>,
    trends_error: Option<String>,
    surface_file: String,
}

fn cmd_pdp(cfg: &RunConfig, out: &Path, model_path: &Path, strains: &[f64]) -> Result<Status> {
    let model = Model::load(model_path)?;
    let strains = if strains.is_empty() {
        cfg.pdp.strain_levels.clone()
    } else {
        strains.to_vec()
    };
    let surfaces: Vec<PdpSurface> = strains
        .iter()
        .map(|&s| analysis::partial_dependence(&model, s, cfg.pdp.resolution, cfg.pdp.radius))
        .collect::<Result<_>>()?;
    let model_hash = model.content_hash()?;
    for surface in &surfaces {
        let tag = strain_tag(surface.strain_level);
        let file = format!("surface_{tag}.csv");
        analysis::write_surface_csv(create(&out.join(&file))?, surface)?;
        let (trends, trends_error) = match analysis::qualitative_trends(surface) {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.to_string())),
        };
        write_json(
            &out.join(format!("surface_{tag}.json")),
            &SurfaceHeader {
                model: model_path,
                model_hash: model_hash.clone(),
                strain_level: surface.strain_level,
                resolution: surface.binder_axis.len(),
                coverage_radius: surface.radius,
                binder_range: (model.scaler.binder.min, model.scaler.binder.max),
                voids_range: (model.scaler.voids.min, model.scaler.voids.max),
                n_covered: surface.coverage.iter().flatten().filter(|&&c| c).count(),
                trends,
                trends_error,
                surface_file: file,
            },
        )?;
    }
    if let Some(first) = surfaces.first() {
        analysis::write_points_csv(create(&out.join("points.csv"))?, &first.data_points)?;
    }
    println!("wrote {} surface(s)", surfaces.len());
    Ok(Status::Ok)
}

const PREDICT_COLUMNS: [&str; 3] = ["binder_content", "air_voids", "strain_microstrain"];

/// Reads the three input columns by name; other columns are ignored.
pub fn read_prediction_inputs(path: &Path) -> Result<Vec<[f64; 3]>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers()?.clone();
    let idx: Vec<usize> = PREDICT_COLUMNS
        .iter()
        .map(|c| {
            headers.iter().position(|h| h == *c).ok_or_else(|| Error::Header {
                expected: PREDICT_COLUMNS.join(","),
                found: headers.iter().collect::<Vec<_>>().join(","),
            })
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let mut x = [0.0; 3];
        for (k, &j) in idx.iter().enumerate() {
            let raw = record.get(j).unwrap_or("");
            x[k] = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::MalformedRow {
                    row,
                    column: PREDICT_COLUMNS[k].to_string(),
                    message: format!("{}: cannot parse `{raw}` as a finite number", path.display()),
                })?;
        }
        rows.push(x);
    }
    Ok(rows)
}

fn cmd_predict(model_path: &Path, input: &Path, output: &Path) -> Result<Status> {
    let model = Model::load(model_path)?;
    let inputs = read_prediction_inputs(input)?;
    let preds = model.predict(&inputs)?;
    let mut w = csv::Writer::from_writer(create(output)?);
    w.write_record(PREDICT_COLUMNS.iter().chain(&["pred_fatigue_life", "extrapolated"]))?;
    for (x, p) in inputs.iter().zip(&preds) {
        w.write_record([
            x[0].to_string(),
            x[1].to_string(),
            x[2].to_string(),
            p.cycles.to_string(),
            p.extrapolated.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(output, e))?;
    let n_extra = preds.iter().filter(|p| p.extrapolated).count();
    println!("{} prediction(s), {n_extra} extrapolated", preds.len());
    Ok(Status::Ok)
}

