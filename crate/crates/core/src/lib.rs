//! Fatigue-life regression for asphalt concrete with small feedforward
//! networks.
//!
//! The pipeline runs in this order:
//!
//! 1. [`dataset`]: load the test records, drop outliers, scale the three
//!    inputs (binder content, air voids, strain) to `[0, 1]`, assign folds.
//! 2. [`network`] and [`training`]: a fully connected regressor trained with
//!    MSE or MSLE on raw cycle counts using RMSprop, Adam or Nadam.
//! 3. [`evaluation`]: coefficient of determination and k-fold cross-validation.
//! 4. [`search`]: exhaustive hyperparameter grid with a resumable results store.
//! 5. [`analysis`]: prediction surfaces over binder content and air voids at a
//!    fixed strain, with a data-coverage mask.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod network;
pub mod search;
pub mod seed;
pub mod training;

pub use error::{Error, Result};

/// Version string written into every output's provenance.
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
