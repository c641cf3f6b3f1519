use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid message: {0}")]
    InvalidMessage(String),
    #[error("impact level table is empty")]
    EmptyTable,
    #[error("invalid impact level {index}: {reason}")]
    InvalidLevel { index: usize, reason: String },
    #[error("invalid privacy profile {phi}: {reason}")]
    InvalidProfile { phi: u32, reason: String },
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("shape mismatch: expected {expected} entries, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("cannot read scenario: {0}")]
    Io(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObfuscationError {
    #[error("geocast radius must be positive, got {0}")]
    InvalidLevelRadius(f64),
    #[error("imprecision radius must be non-negative, got {0}")]
    InvalidImprecision(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(
        "support enumeration needs 2^{bits} partitions, above the limit of 2^{limit}; \
         merge impact or privacy levels"
    )]
    EnumerationGuard { bits: usize, limit: usize },
    #[error("level {level} has no other vehicle sharing its support (n+ = 0)")]
    DegenerateSupport { level: usize },
    #[error("level index {level} is out of range")]
    LevelOutOfRange { level: usize },
    #[error("no partition converged to a feasible profile")]
    NoConvergedPartition,
    #[error("grid search would evaluate {cells} cells, above the limit of {limit}")]
    GridGuard { cells: f64, limit: f64 },
    #[error("invalid game: {0}")]
    InvalidGame(String),
}
