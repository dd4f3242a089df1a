use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("variable `{0}` is degenerate (constant or single category)")]
    DegenerateVariable(String),

    #[error("unknown measurement scale `{0}`")]
    UnknownScale(String),

    #[error("column `{column}`: value `{value}` is not one of the declared labels")]
    LabelViolation { column: String, value: String },

    #[error("column `{column}`: `{value}` is not a number")]
    NotNumeric { column: String, value: String },

    #[error("{path}: row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        path: PathBuf,
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("duplicate sample id `{0}`")]
    DuplicateSample(String),

    #[error("blocks share no sample ids")]
    EmptyIntersection,

    #[error("schema: {0}")]
    Schema(String),

    #[error("representation is not standardized: trace(S'S) = {0}")]
    NotStandardized(f64),

    #[error("association undefined: zero denominator")]
    ZeroDenominator,

    #[error("rank {rank} is out of range: must be at least 1 and below {limit}")]
    RankTooLarge { rank: usize, limit: usize },

    #[error("slab {0} is not symmetric")]
    NotSymmetric(usize),

    #[error("{samples} samples exceed the dense representation cap of {cap}; subsample the data")]
    TooManySamples { samples: usize, cap: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(
        "binary loadings diverged (norm {0:.3e}); the binary block looks separable, try a smaller rank or an offset-only fit"
    )]
    Separation(f64),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
