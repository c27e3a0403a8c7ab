use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside the domain of the function it parameterises.
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    /// A probability (or vector of probabilities) is not valid.
    #[error("invalid probability: {0}")]
    InvalidProbability(String),

    #[error("invalid calibrator family: {0}")]
    Family(String),

    #[error("label {label} is not valid for arity {arity}")]
    InvalidLabel { label: usize, arity: usize },

    #[error("forecast arity {found} does not match expected arity {expected}")]
    ArityMismatch { expected: usize, found: usize },

    /// The realized label received probability zero, so a likelihood ratio
    /// cannot be formed. Usually means truncation was skipped.
    #[error("zero probability on realized label {label} at step {step}")]
    ZeroLikelihood { label: usize, step: u64 },

    /// Log loss is infinite on `count` observations.
    #[error("log loss is infinite on {count} observation(s)")]
    InfiniteLoss { count: usize },

    #[error("predictor sequencing error: {0}")]
    Sequencing(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("regret bound violated: slack {slack:e}")]
    BoundViolation { slack: f64 },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let row = err
            .position()
            .map(|pos| pos.line() as usize)
            .unwrap_or_default();
        Error::Parse {
            row,
            message: err.to_string(),
        }
    }
}
