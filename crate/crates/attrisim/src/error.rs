use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("line {line}: attribution=1 with conversion=0 violates the log schema")]
    SchemaViolation { line: usize },

    #[error("log spans {available} days but {required} are required")]
    InsufficientSpan { required: usize, available: usize },

    #[error("no attribution samples could be extracted")]
    NoSamples,

    #[error("delta must be non-negative, got {0}")]
    NegativeDelta(f64),

    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(f64),

    #[error("empty click list")]
    EmptyClicks,

    #[error("clicks are not time-ordered")]
    UnorderedClicks,

    #[error("training set contains a single class")]
    SingleClass,

    #[error("non-finite loss at iteration {iter}: {detail}")]
    NonFiniteLoss { iter: usize, detail: String },

    #[error("all bids are zero, calibration is undefined")]
    ZeroBids,

    #[error("hash bits must be in [10, 28], got {0}")]
    BadHashBits(u8),

    #[error("{n} records have non-positive cost; finite-beta expected utility is undefined")]
    NonPositiveCosts { n: usize },

    #[error("empty contribution list")]
    EmptyContributions,

    #[error("baseline metric sum is zero, uplift is undefined")]
    ZeroBaseline,

    #[error("daily stability needs at least 2 days, got {0}")]
    TooFewDays(usize),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wraps an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}
