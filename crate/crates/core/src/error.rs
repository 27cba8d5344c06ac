use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numerical,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Data => "data",
            ErrorCategory::Numerical => "numerical",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("empty sequence")]
    EmptySequence,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("empty input")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("leak rate must be positive to rescale the reservoir")]
    InvalidLeak,
    #[error("reservoir rescale infeasible: {0}")]
    RescaleInfeasible(String),
    #[error("iterative estimator did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("singular linear system")]
    SingularSystem,
    #[error("invalid feature index {index} for {n_inputs} inputs")]
    InvalidFeatureIndex { index: usize, n_inputs: usize },
    #[error("k = {k} exceeds the {available} available items")]
    KTooLarge { k: usize, available: usize },
    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("no target entry for sequence {0}")]
    MissingTargetEntry(String),
    #[error("label {label} for sequence {id} is not +1 or -1")]
    LabelOutOfDomain { id: String, label: String },
    #[error("{path}: row {row} has {got} features, expected {expected}")]
    InconsistentFeatureCount {
        path: PathBuf,
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            InvalidConfig(_)
            | InvalidHyperparameter(_)
            | InvalidParameters(_)
            | InvalidLeak
            | InvalidFeatureIndex { .. }
            | KTooLarge { .. } => ErrorCategory::Config,
            RescaleInfeasible(_)
            | NoConvergence { .. }
            | NumericalBreakdown(_)
            | SingularSystem => ErrorCategory::Numerical,
            DimensionMismatch { .. }
            | EmptySequence
            | EmptyDataset
            | EmptyInput
            | DatasetTooSmall(_)
            | Parse { .. }
            | SchemaMismatch(_)
            | MissingTargetEntry(_)
            | LabelOutOfDomain { .. }
            | InconsistentFeatureCount { .. }
            | Io { .. }
            | Json(_)
            | Csv(_) => ErrorCategory::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
