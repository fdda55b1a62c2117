use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}, column `{column}`: {message}")]
    MalformedRow {
        row: usize,
        column: String,
        message: String,
    },

    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },

    #[error("non-positive fatigue life at row {0}")]
    NonPositiveFatigueLife(usize),

    #[error("empty dataset after filtering")]
    EmptyAfterFiltering,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical overflow in forward pass")]
    ForwardOverflow,

    #[error("gradient overflow")]
    GradientOverflow,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate target variance")]
    DegenerateVariance,

    #[error("strain extrapolation refused: {strain} outside training range [{min}, {max}]")]
    StrainExtrapolation { strain: f64, min: f64, max: f64 },

    #[error("trend undefined: only {0} covered cells")]
    TrendUndefined(usize),

    #[error("model file: {0}")]
    Model(String),

    #[error("config: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }
}
