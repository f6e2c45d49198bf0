use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("evaluation dataset is empty")]
    EmptyDataset,

    #[error("reference sequence is empty")]
    EmptyReference,

    #[error("n-gram order must be >= 1, got {0}")]
    InvalidOrder(usize),

    #[error("invalid interpolation weights: {0}")]
    InvalidLambdas(String),

    #[error("noise level must lie in [0, 1), got {0}")]
    InvalidNoise(f64),

    #[error("confusion spread {spread} not in 1..={max} for this vocabulary")]
    InvalidSpread { spread: usize, max: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("vocabulary hash mismatch: {expected} vs {actual}")]
    VocabMismatch { expected: String, actual: String },

    #[error("model has {actual} orientation, {expected} required")]
    WrongOrientation { expected: String, actual: String },

    #[error("token {0} is the start symbol of this orientation and cannot be scored")]
    StartSymbolScored(u32),

    #[error("token {0} is outside the prediction support")]
    TokenNotInSupport(u32),

    #[error("step {step} outside grid range 1..={t_max}")]
    StepOutOfRange { step: usize, t_max: usize },

    #[error("grid row {row} is not normalized (probability sum {sum})")]
    UnnormalizedRow { row: usize, sum: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("decoding produced no finalizable hypothesis for {utterance}")]
    DecodeFailure { utterance: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
