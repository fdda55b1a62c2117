//! Losses, exact gradients, optimizers and the epoch loop.

mod backprop;
mod loss;
mod optimizer;
mod trainer;

pub use backprop::{backprop, Gradients};
pub use loss::{compute_loss, loss_gradient, LossKind};
pub use optimizer::{Algorithm, OptimizerConfig, OptimizerState};
pub use trainer::{
    train, write_history_csv, CheckpointMetric, Split, TrainConfig, TrainOutcome, TrainingHistory,
    DIVERGENCE_FACTOR,
};
