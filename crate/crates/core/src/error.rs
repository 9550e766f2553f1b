//! Error type shared across the toolkit.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CalibError>;

#[derive(Debug, Error)]
pub enum CalibError {
    /// Non-finite values, out-of-range labels, or otherwise malformed inputs.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid temperature: {0}")]
    InvalidTemperature(String),

    #[error("invalid smoothing: {0}")]
    InvalidSmoothing(String),

    /// A generation/training spec with out-of-range parameters.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// A long-tail profile that cannot be realized (would need zero-count classes).
    #[error("infeasible spec: {0}")]
    InfeasibleSpec(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// Metric requested on data for which it is undefined (e.g. accuracy of zero rows).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A binned report of the wrong binning mode was passed to a metric.
    #[error("wrong binning mode: {0}")]
    WrongBinning(String),

    /// The temperature line search found no finite objective value.
    #[error("temperature fit failed: {0}")]
    FitFailure(String),

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    /// CLI-level misuse that clap cannot catch (mutually inconsistent flags, same-split fits).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CalibError {
    /// Process exit code class: 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CalibError::Usage(_) => 1,
            CalibError::FitFailure(_) | CalibError::TrainingDiverged(_) => 3,
            _ => 2,
        }
    }
}
