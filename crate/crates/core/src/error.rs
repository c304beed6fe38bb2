use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension must be at least 1")]
    InvalidDimension,

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("no labeled samples available")]
    NoLabeledData,

    #[error("estimator undefined: the expected labeled count n*p must be positive")]
    UndefinedEstimator,

    #[error(
        "coefficient extraction is ill-conditioned for {layers} layers; use at most {max} layers"
    )]
    IllConditionedExtraction { layers: usize, max: usize },

    #[error("all {restarts} training restarts diverged")]
    TrainingFailed { restarts: usize },

    #[error("validation risk is undefined for an empty set of soft labels")]
    UndefinedRisk,

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("row {row}, column `{column}`: cannot parse {value:?} as a number")]
    FeatureParse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: label {value:?} is not +1, -1, or the missing-label token")]
    LabelSchema { row: usize, value: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
