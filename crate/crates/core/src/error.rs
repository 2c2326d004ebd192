use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("column '{0}' has no source/neighbor mapping")]
    UnmappedColumn(String),

    #[error("generation column '{column}' maps to unknown source '{name}'")]
    UnknownSource { column: String, name: String },

    #[error("import column '{column}' maps to unknown neighbor '{neighbor}'")]
    UnknownNeighbor { column: String, neighbor: String },

    #[error("trace has no slot with positive total power")]
    DegenerateTrace,

    #[error("total power is zero at the first slot; no previous intensity to carry forward")]
    ZeroPowerAtStart,

    #[error("timestamps are not strictly increasing at data row {row}")]
    NonMonotoneTimestamps { row: usize },

    #[error("gap of {gap_slots} missing slots at {at} exceeds the limit of {limit}")]
    GapTooLarge {
        at: String,
        gap_slots: usize,
        limit: usize,
    },

    #[error("resolutions {a} min and {b} min are incompatible; one must divide the other")]
    IncompatibleResolution { a: u32, b: u32 },

    #[error("resolution of {0} min does not divide 24 h evenly")]
    UnevenResolution(u32),

    #[error("slot range {start}..{end} lies outside the signal (length {len})")]
    OutOfBounds {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("signal too short: {actual} slots, need at least {required}")]
    SignalTooShort { required: usize, actual: usize },

    #[error("infeasible job {id}: release {release} + duration {duration} > deadline {deadline}")]
    InfeasibleJob {
        id: u64,
        release: usize,
        duration: usize,
        deadline: usize,
    },

    #[error("signal does not cover the scenario horizon: job {id} needs slots up to {needed}, signal has {len}")]
    HorizonOverflow { id: u64, needed: usize, len: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{}: {cause}", path.display())]
    Io { path: PathBuf, cause: std::io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause,
        }
    }
}
