use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Step of the kernel-ME pipeline an error was raised in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PipelineStep {
    PreliminaryB0,
    Order,
    Covariance,
    Factorization,
    Design,
    Hyperparameters,
    Estimate,
    Diagnostics,
}

impl fmt::Display for PipelineStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PipelineStep::PreliminaryB0 => "1: preliminary b0",
            PipelineStep::Order => "2: model order",
            PipelineStep::Covariance => "3: covariance estimate",
            PipelineStep::Factorization => "4: square root",
            PipelineStep::Design => "5: whittle design",
            PipelineStep::Hyperparameters => "6: hyperparameters",
            PipelineStep::Estimate => "7: kernel estimate",
            PipelineStep::Diagnostics => "diagnostics",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid order: n = {order} requires a series longer than {order} (got N = {len})")]
    InvalidOrder { order: usize, len: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("matrix is not positive definite (jitter tried up to {max_jitter:e})")]
    NotPositiveDefinite { max_jitter: f64 },

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("internal numerical error: {0}")]
    Internal(String),

    #[error("pipeline step {step} failed: {source}")]
    Pipeline {
        step: PipelineStep,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at(step: PipelineStep) -> impl FnOnce(Error) -> Error {
        move |source| Error::Pipeline {
            step,
            source: Box::new(source),
        }
    }

    /// Innermost error, with pipeline attribution stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Pipeline { source, .. } => source.root(),
            other => other,
        }
    }

    /// Short machine-readable tag used in result files.
    pub fn tag(&self) -> &'static str {
        match self.root() {
            Error::InvalidOrder { .. } => "invalid_order",
            Error::InvalidData(_) => "invalid_data",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::InvalidHyperparameter(_) => "invalid_hyperparameter",
            Error::InvalidModel(_) => "invalid_model",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Internal(_) => "internal",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Pipeline { .. } => unreachable!(),
        }
    }
}
