use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // numerics
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("too few samples for cubic resampling: got {got}, need at least 4")]
    TooFewSamples { got: usize },
    #[error("sampling rates must be positive (src {src}, dst {dst})")]
    NonPositiveRate { src: f64, dst: f64 },
    #[error("empty input")]
    EmptyInput,
    #[error("need at least {need} rows to fit, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    // dataset
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("schema error in {}: {msg}", .path.display())]
    SchemaError { path: PathBuf, msg: String },
    #[error("row count mismatch: inputs {inputs}, outputs {outputs}")]
    RowCountMismatch { inputs: usize, outputs: usize },
    #[error("category {0} cannot be kinetically normalized")]
    UnsupportedCategory(String),
    #[error("too few frames: got {got}, need at least {need}")]
    TooFewFrames { got: usize, need: usize },
    #[error("time feature column already present")]
    DuplicateTimeFeature,
    #[error("muscle group has no bundles")]
    EmptyGroup,
    #[error("trial {trial} has {frames} frames, shorter than window {window}")]
    TrialTooShort { trial: String, frames: usize, window: usize },

    // nn
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("operation requires {expected} architecture, network is {actual}")]
    WrongArch { expected: String, actual: String },
    #[error("forward cache is stale: parameters changed since the forward pass")]
    StaleCache,
    #[error("dropout probability {0} outside [0, 1)")]
    InvalidProbability(f64),
    #[error("unsupported weight format version {0}")]
    UnsupportedFormat(u32),

    // optim
    #[error("optimizer state does not match parameter shapes")]
    StateShapeMismatch,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("loss diverged at epoch {epoch} (value {value})")]
    DivergedLoss { epoch: usize, value: f64 },
    #[error("least squares underdetermined: {rows} rows for {unknowns} unknowns")]
    Underdetermined { rows: usize, unknowns: usize },
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),

    // protocol
    #[error("too few trials: {0}")]
    TooFewTrials(String),
    #[error("too few subjects: got {got}, need at least {need}")]
    TooFewSubjects { got: usize, need: usize },
    #[error("grid axis {0} is empty")]
    EmptyAxis(String),
    #[error("every configuration failed")]
    AllConfigsFailed,
    #[error("test data leaks into training: {0:?}")]
    LeakageDetected(Vec<String>),
    #[error("unknown trial id {0}")]
    UnknownTrial(String),
    #[error("duplicate trial id {0}")]
    DuplicateTrial(String),
    #[error("checkpoint does not match the current search: {0}")]
    CheckpointMismatch(String),

    // metrics
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no rows for category {0}")]
    EmptyCategory(String),

    // synth
    #[error("lag {lag} must be smaller than window length {window}")]
    LagTooLarge { lag: usize, window: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
