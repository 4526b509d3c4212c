//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-binary treatment value {value} in row {row}")]
    NonBinaryTreatment { row: usize, value: f64 },

    #[error("non-finite value in row {row}, column {column}")]
    NonFinite { row: usize, column: String },

    #[error("sample has no treated rows")]
    NoTreated,

    #[error("sample has no control rows")]
    NoControls,

    #[error("sample has no covariate columns")]
    NoCovariates,

    #[error("{context}: matrix is singular")]
    Singular { context: String },

    #[error("treated row {treated_row}: only {available} eligible controls, need {needed}")]
    TooFewControls {
        treated_row: usize,
        needed: usize,
        available: usize,
    },

    #[error("row {row}: only {available} same-group neighbors, need {needed}")]
    TooFewNeighbors {
        row: usize,
        needed: usize,
        available: usize,
    },

    #[error("fitting set too small: {rows} rows for {params} parameters")]
    FittingSetTooSmall { rows: usize, params: usize },

    #[error("variance estimate is zero")]
    ZeroVariance,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("transformation group too large: {0}")]
    GroupTooLarge(String),

    #[error("empty confidence interval: every grid value rejected")]
    EmptyInterval,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("replication {rep}: {source}")]
    Replication { rep: usize, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 usage, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::NonBinaryTreatment { .. }
            | Error::NonFinite { .. }
            | Error::NoTreated
            | Error::NoControls
            | Error::NoCovariates
            | Error::Data(_)
            | Error::Io(_) => 3,
            Error::Replication { source, .. } => source.exit_code(),
            _ => 4,
        }
    }
}
