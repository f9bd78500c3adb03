//! Crate-wide error type and result alias.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A value failed its construction invariants.
    #[error("construction: {0}")]
    Construction(String),

    /// A precondition on an operation was violated by the caller.
    #[error("usage: {0}")]
    Usage(String),

    /// A box lies fully outside the image after clamping.
    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    /// Model output could not be parsed; `field` names the missing or
    /// invalid piece and `raw` carries the offending text.
    #[error("parse: field `{field}` missing or invalid in: {raw:?}")]
    Parse { field: String, raw: String },

    /// A region index referred outside the candidate set.
    #[error("range: region index {index} out of range for {count} regions")]
    Range { index: usize, count: usize },

    /// Template rendering failed on the named placeholder.
    #[error("template `{template}`: {problem} placeholder `{name}`")]
    Template {
        template: String,
        problem: &'static str,
        name: String,
    },

    /// Transport or protocol failure talking to a model or OCR service.
    #[error("client: {0}")]
    Client(String),

    /// The scripted client had no entry for a request.
    #[error("no fixture entry matches request digest {digest}")]
    FixtureMiss { digest: String },

    /// A sample produced zero regions after every grounding route.
    #[error("grounding failed: {0}")]
    GroundingFailed(String),

    /// Chain construction could not produce even a first step.
    #[error("chain failed: {0}")]
    ChainFailed(String),

    /// Predictions could not be joined to grounded samples.
    #[error("report: unjoinable sample ids: {0:?}")]
    Report(Vec<String>),

    #[error("config `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for validation problems the caller
    /// can fix (bad config, bad input records), 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_)
            | Error::Config { .. }
            | Error::Construction(_)
            | Error::Template { .. } => 2,
            _ => 1,
        }
    }
}
