use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient history at sample {index}: magnitude window needs {needed} samples")]
    InsufficientHistory { index: usize, needed: usize },

    #[error("no tripping attack found within search bounds: {0}")]
    NoSolution(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("attack does not trip the relay")]
    AttackIneffective,

    #[error("scenario {id} rejected: {reason}")]
    RejectedScenario { id: String, reason: String },

    #[error("window [{start}, {end}] falls outside stream of {len} samples")]
    WindowOutOfBounds { start: i64, end: i64, len: usize },

    #[error("relay did not trigger; validation is defined only after pickup")]
    NotTriggered,

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: String, found: String },

    #[error("training diverged at epoch {epoch} (last finite epoch: {last_finite:?})")]
    TrainingDiverged { epoch: usize, last_finite: Option<usize> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format { offset, message: msg.into() }
    }
}
