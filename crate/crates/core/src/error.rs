use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid temporal token <{token}>: valid range is <0>..<{max}>")]
    InvalidToken { token: usize, max: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("ordering violation: {0}")]
    Ordering(String),

    #[error("no grounded clause could be parsed from {raw:?}")]
    ParseFailure { raw: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("degenerate example: {0}")]
    DegenerateExample(String),

    #[error("unknown stage {0}; expected 1, 2 or 3")]
    UnknownStage(u8),

    #[error("unknown task {0:?}")]
    UnknownTask(String),

    #[error("training diverged at stage {stage}, step {step}: loss = {loss}")]
    Divergence { stage: u8, step: usize, loss: f64 },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("id mismatch: {0}")]
    IdMismatch(String),

    #[error("generation format error: {0}")]
    GenerationFormat(String),

    #[error("insufficient distractors: {found} in band, {needed} needed")]
    InsufficientDistractors { found: usize, needed: usize },

    #[error("client failure: {0}")]
    Client(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the command-line front end: 2 for input and
    /// validation problems, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } | Error::Client(_) | Error::Io(_) => 1,
            _ => 2,
        }
    }
}
