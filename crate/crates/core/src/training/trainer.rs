use std::io::Write;
use std::time::Instant;

use ndarray::{ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::seed;

use super::backprop::backprop;
use super::loss::{compute_loss, LossKind};
use super::optimizer::{OptimizerConfig, OptimizerState};

/// A run diverges once its training loss stays above this multiple of the
/// initial loss for `divergence_patience` consecutive epochs. A run also
/// fails once it collapses: its effective training predictions are all equal
/// (dead ReLU layers, or every MSLE prediction clamped) for that many epochs
/// while the targets are not.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointMetric {
    ValidationLoss,
    TrainingLoss,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    /// Clamped to the training-set size.
    pub batch_size: usize,
    pub checkpoint: CheckpointMetric,
    pub divergence_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Msle,
            optimizer: OptimizerConfig::default(),
            epochs: 300_000,
            batch_size: 32,
            checkpoint: CheckpointMetric::ValidationLoss,
            divergence_patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.divergence_patience == 0 {
            return Err(Error::invalid("divergence_patience must be at least 1"));
        }
        self.optimizer.validate()
    }
}

/// Scaled inputs and raw targets of one split.
#[derive(Clone, Copy, Debug)]
pub struct Split<'a> {
    pub x: ArrayView2<'a, f64>,
    pub y: ArrayView1<'a, f64>,
}

impl<'a> Split<'a> {
    pub fn new(x: ArrayView2<'a, f64>, y: ArrayView1<'a, f64>) -> Self {
        Split { x, y }
    }

    fn len(&self) -> usize {
        self.y.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    /// Loss of the untrained network on the training split.
    pub initial_train_loss: f64,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch of the returned network; 0 if no epoch finished with a finite metric.
    pub best_epoch: usize,
    pub wall_time_secs: f64,
}

impl TrainingHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Lowest checkpoint-metric network seen, never simply the last one.
    pub network: Network,
    pub history: TrainingHistory,
    pub converged: bool,
    pub failure: Option<String>,
}

fn split_loss(net: &Network, split: &Split, kind: LossKind) -> Result<f64> {
    split_eval(net, split, kind).map(|(loss, _)| loss)
}

/// Loss plus whether the effective predictions are all identical.
fn split_eval(net: &Network, split: &Split, kind: LossKind) -> Result<(f64, bool)> {
    let pred = net.forward_batch(split.x)?;
    let pred = pred.as_slice().expect("standard layout");
    let y = split.y.to_vec();
    let effective = |p: f64| if kind == LossKind::Msle { p.max(0.0) } else { p };
    let first = effective(pred[0]);
    let constant = pred.iter().all(|&p| effective(p) == first);
    Ok((compute_loss(kind, &y, pred)?, constant))
}

/// Mini-batch training with seeded per-epoch shuffling and best-epoch
/// checkpointing. Divergence ends the run early with `converged = false`.
pub fn train(mut net: Network, train: Split, val: Split, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.len() == 0 || val.len() == 0 {
        return Err(Error::invalid("training and validation splits must be non-empty"));
    }
    if train.x.nrows() != train.len() || val.x.nrows() != val.len() {
        return Err(Error::ShapeMismatch("feature rows and targets differ".into()));
    }
    let start = Instant::now();
    let mut rng = seed::rng(cfg.seed);
    let mut state = OptimizerState::for_network(&net);
    let batch_size = cfg.batch_size.min(train.len());
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut history = TrainingHistory::default();
    let mut best = net.clone();
    let mut best_metric = f64::INFINITY;
    let mut failure = None;

    match split_loss(&net, &train, cfg.loss) {
        Ok(l) => history.initial_train_loss = l,
        Err(e) => failure = Some(format!("initial evaluation failed: {e}")),
    }
    let blowup = DIVERGENCE_FACTOR * history.initial_train_loss;
    let varied_targets = train.y.iter().any(|&y| y != train.y[0]);
    let mut streak = 0;
    let mut flat_streak = 0;

    'epochs: for epoch in 1..=cfg.epochs {
        if failure.is_some() {
            break;
        }
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            let xb = train.x.select(Axis(0), chunk);
            let yb = train.y.select(Axis(0), chunk);
            let step = backprop(&net, xb.view(), yb.view(), cfg.loss)
                .and_then(|g| state.apply(&cfg.optimizer, &mut net, &g));
            if let Err(e) = step {
                failure = Some(format!("epoch {epoch}: {e}"));
                break 'epochs;
            }
        }

        let losses = split_eval(&net, &train, cfg.loss)
            .and_then(|t| split_loss(&net, &val, cfg.loss).map(|v| (t, v)));
        let ((train_loss, flat), val_loss) = match losses {
            Ok(pair) => pair,
            Err(e) => {
                history.train_loss.push(f64::NAN);
                history.val_loss.push(f64::NAN);
                failure = Some(format!("epoch {epoch}: {e}"));
                break;
            }
        };
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            failure = Some(format!("epoch {epoch}: non-finite loss"));
            break;
        }
        if train_loss > blowup {
            streak += 1;
            if streak >= cfg.divergence_patience {
                failure = Some(format!(
                    "epoch {epoch}: loss {train_loss:e} above {DIVERGENCE_FACTOR:e} x initial for {streak} epochs"
                ));
                break;
            }
        } else {
            streak = 0;
        }
        if flat && varied_targets {
            flat_streak += 1;
            if flat_streak >= cfg.divergence_patience {
                failure = Some(format!(
                    "epoch {epoch}: collapsed to a constant prediction for {flat_streak} epochs"
                ));
                break;
            }
        } else {
            flat_streak = 0;
        }

        let metric = match cfg.checkpoint {
            CheckpointMetric::ValidationLoss => val_loss,
            CheckpointMetric::TrainingLoss => train_loss,
        };
        if metric < best_metric {
            best_metric = metric;
            best.clone_from(&net);
            history.best_epoch = epoch;
        }
    }

    history.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(TrainOutcome {
        network: best,
        history,
        converged: failure.is_none(),
        failure,
    })
}

/// `epoch,train_loss,val_loss`, one row per completed epoch.
pub fn write_history_csv<W: Write>(writer: W, history: &TrainingHistory) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "train_loss", "val_loss"])?;
    for (i, (t, v)) in history.train_loss.iter().zip(&history.val_loss).enumerate() {
        w.write_record([(i + 1).to_string(), t.to_string(), v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<history>", e))?;
    Ok(())
}
