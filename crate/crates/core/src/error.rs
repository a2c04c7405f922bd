use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: timestamp not strictly increasing")]
    NonIncreasing { line: usize },

    #[error("unknown quantity/unit: {0}")]
    UnknownQuantity(String),

    #[error("invalid time series: {0}")]
    InvalidSeries(String),

    #[error("series too short: need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("empty {0} partition")]
    EmptyPartition(&'static str),

    #[error("misaligned inputs: {0}")]
    Misaligned(String),

    #[error("no eligible samples ({excluded} candidate windows excluded)")]
    NoEligibleSamples { excluded: usize },

    #[error("matrix not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("SVD did not converge after {sweeps} sweeps")]
    SvdNoConvergence { sweeps: usize },

    #[error("rank-deficient least-squares system")]
    RankDeficient,

    #[error("objective returned {value} at evaluation {evaluation}")]
    NonFiniteObjective { value: f64, evaluation: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite input at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("FER undefined: baseline MSE is zero")]
    UndefinedFer,

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("hyperparameter search never reached a positive-definite kernel matrix")]
    NoFeasibleHyperparameters,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serialization(String),

    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}
