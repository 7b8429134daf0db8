use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // linear algebra
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric (max relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    // networks and training
    #[error("non-finite activation in layer {0}")]
    NonFiniteActivation(usize),
    #[error("non-finite gradient for layer {0}")]
    NonFiniteGradient(usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("loss node is not scalar (shape {0}x{1})")]
    NotScalarLoss(usize, usize),
    #[error("layer index {index} out of range for a network with {layers} layers")]
    LayerOutOfRange { index: usize, layers: usize },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("gram matrix factorization failed after jitter escalation to {jitter:e}")]
    FactorizationFailed { jitter: f64 },
    #[error("batch mismatch: {0}")]
    BatchMismatch(String),
    #[error("training diverged: {0}")]
    DivergedTraining(String),
    #[error("every layer is frozen; nothing to train")]
    AllLayersFrozen,
    #[error("expert set is empty")]
    EmptyExpertSet,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    // data and persistence
    #[error("bad magic number {found:#010x} (expected {expected:#010x})")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated file: {0}")]
    TruncatedFile(String),
    #[error("count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("ragged CSV: row {row} has {found} fields, header has {expected}")]
    RaggedRows { row: usize, expected: usize, found: usize },
    #[error("non-numeric CSV cell {value:?} at row {row}, column {column:?}")]
    NonNumericCell { row: usize, column: String, value: String },
    #[error("label column {0:?} not found in CSV header")]
    UnknownLabelColumn(String),
    #[error("batch size {0} is too small (need at least 2)")]
    BatchTooSmall(usize),
    #[error("fingerprint mismatch for {0}")]
    FingerprintMismatch(&'static str),
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::NonFinite(_)
                | Error::NonFiniteActivation(_)
                | Error::NonFiniteGradient(_)
                | Error::FactorizationFailed { .. }
                | Error::DivergedTraining(_)
        )
    }
}
