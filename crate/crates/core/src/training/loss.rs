//! Mean squared error and mean squared logarithmic error on raw cycle counts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Msle,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Msle => "msle",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "msle" => Ok(LossKind::Msle),
            other => Err(Error::invalid(format!("unknown loss `{other}`"))),
        }
    }
}

fn check(kind: LossKind, y_true: &[f64], y_pred: &[f64]) -> Result<()> {
    if y_true.len() != y_pred.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} targets vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::invalid("loss of an empty batch"));
    }
    if !y_true.iter().chain(y_pred).all(|v| v.is_finite()) {
        return Err(Error::invalid("non-finite loss input"));
    }
    if kind == LossKind::Msle && y_true.iter().any(|&y| y <= -1.0) {
        return Err(Error::invalid("MSLE targets must exceed -1"));
    }
    Ok(())
}

/// Predictions enter the log through `max(pred, 0)`.
fn clamp(pred: f64) -> f64 {
    pred.max(0.0)
}

pub fn compute_loss(kind: LossKind, y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check(kind, y_true, y_pred)?;
    let n = y_true.len() as f64;
    let total: f64 = match kind {
        LossKind::Mse => y_true
            .iter()
            .zip(y_pred)
            .map(|(y, p)| (y - p) * (y - p))
            .sum(),
        LossKind::Msle => y_true
            .iter()
            .zip(y_pred)
            .map(|(y, p)| {
                let d = y.ln_1p() - clamp(*p).ln_1p();
                d * d
            })
            .sum(),
    };
    Ok(total / n)
}

/// Derivative of the mean loss with respect to each prediction. MSLE passes
/// no gradient through the clamp for negative predictions.
pub fn loss_gradient(kind: LossKind, y_true: &[f64], y_pred: &[f64]) -> Result<Vec<f64>> {
    check(kind, y_true, y_pred)?;
    let scale = 2.0 / y_true.len() as f64;
    Ok(y_true
        .iter()
        .zip(y_pred)
        .map(|(&y, &p)| match kind {
            LossKind::Mse => scale * (p - y),
            LossKind::Msle => {
                if p < 0.0 {
                    0.0
                } else {
                    -scale * (y.ln_1p() - p.ln_1p()) / (p + 1.0)
                }
            }
        })
        .collect())
}
