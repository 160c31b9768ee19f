use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the modelling pipeline.
#[derive(Debug, Error)]
pub enum ShgtError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: duplicate patient_id {patient_id:?}")]
    DuplicatePatient { line: usize, patient_id: String },

    #[error("line {line}: patient {patient_id:?} has fewer than 2 visits")]
    TooFewVisits { line: usize, patient_id: String },

    #[error("line {line}: unknown code kind in token {token:?}")]
    UnknownCodeKind { line: usize, token: String },

    #[error("line {line}: patient {patient_id:?} has an empty visit")]
    EmptyVisit { line: usize, patient_id: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    Shape {
        context: String,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("non-finite value produced in {stage}")]
    NonFinite { stage: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("loss function is not deterministic: {first} vs {second}")]
    NonDeterministic { first: f64, second: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl ShgtError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ShgtError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by bad input data rather than numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            ShgtError::EmptyCorpus
                | ShgtError::Parse { .. }
                | ShgtError::DuplicatePatient { .. }
                | ShgtError::TooFewVisits { .. }
                | ShgtError::UnknownCodeKind { .. }
                | ShgtError::EmptyVisit { .. }
                | ShgtError::InvalidDataset(_)
                | ShgtError::Checkpoint(_)
        )
    }

    /// True for numerical faults (divergence, non-finite values, failed checks).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            ShgtError::NonFinite { .. } | ShgtError::NonDeterministic { .. }
        )
    }
}

pub type Result<T, E = ShgtError> = std::result::Result<T, E>;
