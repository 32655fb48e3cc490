use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty calibration set")]
    EmptyCalibrationSet,

    #[error("non-finite input")]
    NonFinite,

    #[error("pseudo-labels out of order: lower {lower} > upper {upper}")]
    PseudoLabelOrder { lower: f64, upper: f64 },

    #[error("upper pseudo-label {pseudo} is below the largest calibration label {max_label}")]
    UpperPseudoTooSmall { pseudo: f64, max_label: f64 },

    #[error("lower pseudo-label {pseudo} is above the smallest calibration label {min_label}")]
    LowerPseudoTooLarge { pseudo: f64, min_label: f64 },

    #[error("calibration size too large: {calibration} of {available} examples")]
    CalibrationTooLarge {
        calibration: usize,
        available: usize,
    },

    #[error("invalid Winsorization parameter m = {m} for {k} labels (need 1 <= m and 2m < k)")]
    InvalidWinsorization { m: usize, k: usize },

    #[error("epsilon {epsilon} outside [2/(k+1), 1) for k = {k}")]
    EpsilonOutOfRange { epsilon: f64, k: usize },

    #[error("invalid bounds: lower {lower} must be strictly below upper {upper}")]
    InvalidBounds { lower: f64, upper: f64 },

    #[error("label violates declared bounds: {label} not in [{lower}, {upper}]")]
    LabelOutOfBounds { label: f64, lower: f64, upper: f64 },

    #[error("feature dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("degenerate anchors")]
    DegenerateAnchors,

    #[error("merge input out of order: need {y_low} <= {lower} <= {upper} <= {y_high}")]
    MergeOrder {
        y_low: f64,
        lower: f64,
        upper: f64,
        y_high: f64,
    },

    #[error("bag too small: {size} elements for m = {m}")]
    BagTooSmall { size: usize, m: usize },

    #[error("selector {selector} outside interval [{lower}, {upper}]")]
    SelectorOutsideInterval {
        selector: f64,
        lower: f64,
        upper: f64,
    },

    #[error(
        "too few examples: {available} examples cannot fill {folds} folds of at least {per_fold}"
    )]
    TooFewExamples {
        available: usize,
        folds: usize,
        per_fold: usize,
    },

    #[error("{0}")]
    InvalidParameter(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("non-numeric cell `{value}` in column `{column}` at data row {row}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("empty file: {0}")]
    EmptyFile(PathBuf),

    #[error("trial with seed {seed} failed: {source}")]
    Trial {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
