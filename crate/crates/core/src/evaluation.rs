//! Coefficient of determination and the k-fold cross-validation protocol.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{self, Sample};
use crate::error::{Error, Result};
use crate::model::{Model, Provenance};
use crate::network::{Network, NetworkConfig};
use crate::seed;
use crate::training::{self, Split, TrainConfig, TrainingHistory};

/// `1 - SS_res / SS_tot`.
pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} targets vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::invalid("r_squared of an empty set"));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean) * (y - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p) * (y - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// R² where it is defined, `None` for single-sample or constant-target sets.
fn r_squared_if_defined(y_true: &[f64], y_pred: &[f64]) -> Result<Option<f64>> {
    match r_squared(y_true, y_pred) {
        Ok(r) => Ok(Some(r)),
        Err(Error::DegenerateVariance) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OutOfFold {
    pub sample_index: usize,
    pub true_nf: f64,
    pub pred_nf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold_index: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Held-out R²; absent when undefined or the fold did not converge.
    pub r_squared: Option<f64>,
    /// R² of this fold's model over every sample.
    pub in_sample_r_squared: Option<f64>,
    pub best_epoch: usize,
    pub converged: bool,
    pub failure: Option<String>,
    #[serde(skip)]
    pub pairs: Vec<OutOfFold>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvReport {
    pub n_samples: usize,
    pub n_folds: usize,
    pub seed: u64,
    pub dataset_hash: String,
    pub epochs: usize,
    pub folds: Vec<FoldResult>,
    pub n_converged: usize,
    /// Mean held-out R² over converged folds with a defined R².
    pub mean_r_squared: Option<f64>,
    /// R² over the union of held-out predictions of converged folds.
    pub pooled_r_squared: Option<f64>,
    /// Mean over converged folds of each fold model's R² on all samples.
    pub in_sample_r_squared: Option<f64>,
    pub status: Option<String>,
}

impl CvReport {
    /// Out-of-fold pairs of every fold, ordered by fold then sample index.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, &OutOfFold)> {
        self.folds
            .iter()
            .flat_map(|f| f.pairs.iter().map(move |p| (f.fold_index, p)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CvOptions {
    pub n_folds: usize,
    pub seed: u64,
    /// Train folds on the rayon pool. Results do not depend on this.
    pub parallel: bool,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            n_folds: 4,
            seed: 0,
            parallel: true,
        }
    }
}

/// A cross-validation report plus the per-fold models and histories.
#[derive(Clone, Debug)]
pub struct CvRun {
    pub report: CvReport,
    pub models: Vec<Model>,
    pub histories: Vec<TrainingHistory>,
}

/// Seeds of one fold: weight init and batch shuffling.
pub fn fold_seeds(seed: u64, fold: usize) -> (u64, u64) {
    (
        seed::derive(seed, "init", fold as u64),
        seed::derive(seed, "shuffle", fold as u64),
    )
}

pub fn kfold_seed(seed: u64) -> u64 {
    seed::derive(seed, "kfold", 0)
}

/// Trains a model on `train` with checkpointing against `val`. The scaler is
/// fitted on `train` alone.
pub fn fit_model(
    train: &[Sample],
    val: &[Sample],
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
) -> Result<(Model, TrainingHistory)> {
    let scaler = dataset::fit_scaler(train)?;
    let x_train = dataset::transform(train, &scaler);
    let y_train = dataset::targets(train);
    let x_val = dataset::transform(val, &scaler);
    let y_val = dataset::targets(val);
    let network = Network::init(net_cfg)?;
    let outcome = training::train(
        network,
        Split::new(x_train.view(), y_train.view()),
        Split::new(x_val.view(), y_val.view()),
        train_cfg,
    )?;
    let provenance = Provenance {
        tool_version: crate::TOOL_VERSION.to_string(),
        seed: train_cfg.seed,
        train_config: Some(train_cfg.clone()),
        dataset_hash: None,
        fold: None,
        n_folds: None,
        best_epoch: outcome.history.best_epoch,
        converged: outcome.converged,
        failure: outcome.failure,
    };
    let model = Model::new(
        net_cfg.clone(),
        outcome.network,
        scaler,
        train.iter().map(Sample::features).collect(),
        provenance,
    );
    Ok((model, outcome.history))
}

fn run_fold(
    samples: &[Sample],
    folds: &dataset::FoldAssignment,
    fold: usize,
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<(FoldResult, Model, TrainingHistory)> {
    let train_idx = folds.train_indices(fold);
    let test_idx = folds.test_indices(fold);
    let train = dataset::select(samples, &train_idx);
    let test = dataset::select(samples, &test_idx);
    let (init_seed, shuffle_seed) = fold_seeds(seed, fold);
    let net_cfg = NetworkConfig {
        seed: init_seed,
        ..net_cfg.clone()
    };
    let train_cfg = TrainConfig {
        seed: shuffle_seed,
        ..train_cfg.clone()
    };
    let (mut model, history) = fit_model(&train, &test, &net_cfg, &train_cfg)?;
    model.provenance.fold = Some(fold);
    model.provenance.n_folds = Some(folds.n_folds);
    model.provenance.seed = seed;

    let predict = |set: &[Sample]| -> Result<Vec<f64>> {
        set.iter()
            .map(|s| model.predict_one(s.features()).map(|p| p.cycles))
            .collect()
    };
    let test_pred = predict(&test)?;
    let pairs: Vec<OutOfFold> = test_idx
        .iter()
        .zip(&test)
        .zip(&test_pred)
        .map(|((&i, s), &p)| OutOfFold {
            sample_index: i,
            true_nf: s.fatigue_life,
            pred_nf: p,
        })
        .collect();
    let converged = model.provenance.converged;
    let (r2, in_sample) = if converged {
        let y_test: Vec<f64> = test.iter().map(|s| s.fatigue_life).collect();
        let y_all: Vec<f64> = samples.iter().map(|s| s.fatigue_life).collect();
        (
            r_squared_if_defined(&y_test, &test_pred)?,
            r_squared_if_defined(&y_all, &predict(samples)?)?,
        )
    } else {
        (None, None)
    };
    let result = FoldResult {
        fold_index: fold,
        n_train: train.len(),
        n_test: test.len(),
        r_squared: r2,
        in_sample_r_squared: in_sample,
        best_epoch: history.best_epoch,
        converged,
        failure: model.provenance.failure.clone(),
        pairs,
    };
    Ok((result, model, history))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Shuffled k-fold cross-validation: per fold, fit the scaler on the
/// training folds, train with the held-out fold as checkpoint set, and score
/// the held-out predictions.
pub fn cross_validate(
    samples: &[Sample],
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
    opts: CvOptions,
) -> Result<CvRun> {
    net_cfg.validate()?;
    train_cfg.validate()?;
    let folds = dataset::kfold_split(samples.len(), opts.n_folds, kfold_seed(opts.seed))?;
    let run = |f: usize| run_fold(samples, &folds, f, net_cfg, train_cfg, opts.seed);
    let results: Vec<(FoldResult, Model, TrainingHistory)> = if opts.parallel {
        (0..opts.n_folds).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..opts.n_folds).map(run).collect::<Result<_>>()?
    };

    let dataset_hash = dataset::content_hash(samples);
    let mut folds_out = Vec::with_capacity(results.len());
    let mut models = Vec::with_capacity(results.len());
    let mut histories = Vec::with_capacity(results.len());
    for (result, mut model, history) in results {
        model.provenance.dataset_hash = Some(dataset_hash.clone());
        folds_out.push(result);
        models.push(model);
        histories.push(history);
    }

    let converged: Vec<&FoldResult> = folds_out.iter().filter(|f| f.converged).collect();
    let n_converged = converged.len();
    let mean_r_squared = mean(converged.iter().filter_map(|f| f.r_squared));
    let in_sample_r_squared = mean(converged.iter().filter_map(|f| f.in_sample_r_squared));
    let (pooled_true, pooled_pred): (Vec<f64>, Vec<f64>) = converged
        .iter()
        .flat_map(|f| f.pairs.iter().map(|p| (p.true_nf, p.pred_nf)))
        .unzip();
    let pooled_r_squared = if pooled_true.is_empty() {
        None
    } else {
        r_squared_if_defined(&pooled_true, &pooled_pred)?
    };
    let status = match n_converged {
        0 => Some("no converged folds".to_string()),
        n if n < opts.n_folds => Some(format!("{n} of {} folds converged", opts.n_folds)),
        _ => None,
    };

    Ok(CvRun {
        report: CvReport {
            n_samples: samples.len(),
            n_folds: opts.n_folds,
            seed: opts.seed,
            dataset_hash,
            epochs: train_cfg.epochs,
            folds: folds_out,
            n_converged,
            mean_r_squared,
            pooled_r_squared,
            in_sample_r_squared,
            status,
        },
        models,
        histories,
    })
}

/// `fold,true_nf,pred_nf` for every out-of-fold prediction.
pub fn write_true_vs_pred_csv<W: Write>(writer: W, report: &CvReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["fold", "true_nf", "pred_nf"])?;
    for (fold, p) in report.pairs() {
        w.write_record([fold.to_string(), p.true_nf.to_string(), p.pred_nf.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<true_vs_pred>", e))?;
    Ok(())
}
