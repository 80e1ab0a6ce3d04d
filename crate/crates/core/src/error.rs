use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid observation at stratum {index}: {reason}")]
    InvalidObservation { index: usize, reason: String },

    #[error(
        "stratum {i} has zero likelihood under every grid point (grid range excludes the data)"
    )]
    ZeroLikelihoodRow { i: usize },

    #[error("mixture density vanished at row {row}")]
    NumericalUnderflow { row: usize },

    #[error("no data to derive a grid range from")]
    EmptyData,

    #[error("every stratum is empty")]
    AllStrataEmpty,

    #[error("invalid mixing weights: {0}")]
    InvalidWeights(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("likelihood-ratio constraint is infeasible: deviance at the likelihood maximizer {deviance} exceeds threshold {threshold}")]
    InfeasibleConstraint { deviance: f64, threshold: f64 },

    #[error("negative value {value} in stratum {stratum}; outcomes must be nonnegative")]
    NegativeValue { stratum: usize, value: f64 },

    #[error("at threshold c = {threshold}: {source}")]
    AtThreshold {
        threshold: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("replicate {rep}: {source}")]
    Replicate {
        rep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Strips threshold/replicate annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtThreshold { source, .. } | Error::Replicate { source, .. } => source.root(),
            other => other,
        }
    }
}
