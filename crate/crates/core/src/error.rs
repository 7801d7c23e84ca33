use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} = {value} is outside the valid domain")]
    Domain { what: &'static str, value: f64 },

    #[error("degenerate sample: all values are equal")]
    DegenerateSample,

    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },

    #[error("invalid quality model: {0}")]
    InvalidModel(String),

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("expected cost is zero (zero-budget campaign)")]
    ZeroExpectedCost,

    #[error("total budget is zero")]
    ZeroBudget,

    #[error("trace has no wins")]
    NoWins,

    #[error("instance has {edges} request-campaign edges, above the cap of {cap}")]
    InstanceTooLarge { edges: usize, cap: usize },

    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },

    #[error("instance mismatch: {0}")]
    Mismatch(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
