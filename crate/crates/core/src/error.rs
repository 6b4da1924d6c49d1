use thiserror::Error;

/// Errors produced by the toolkit's library operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an operation's inputs was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Injection asked for more poisons than were supplied.
    #[error("insufficient poisons: requested {requested}, available {available}")]
    InsufficientPoisons { requested: usize, available: usize },

    /// The c-gram window is wider than the target.
    #[error("window exceeds target: c={c} but target has {n} words")]
    WindowExceedsTarget { c: usize, n: usize },

    /// A c-gram window exhausted its generation budget during crafting.
    #[error("poison crafting exhausted {attempts} attempts for window {window_index}")]
    CraftExhausted { window_index: usize, attempts: u32 },

    /// The configured backend does not implement the requested capability.
    #[error("capability unsupported by backend: {0}")]
    Unsupported(&'static str),

    /// Transport-level failure talking to a backend, after retries.
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    /// The backend replied but produced no usable completion.
    #[error("empty generation")]
    EmptyGeneration,

    /// The backend returned a non-retryable protocol or API error.
    #[error("backend error: {0}")]
    Backend(String),

    /// Embedding dimension differs from the backend's declared dimension.
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    /// Lowercase reference text has perplexity 1, making the ratio undefined.
    #[error("degenerate reference: lowercased text has zero log-perplexity")]
    DegenerateReference,

    /// A sample was scored against an index that does not contain it.
    #[error("sample {0:?} is not present in the n-gram index")]
    NotIndexed(String),

    /// An evaluation run aborted mid-way; the partial report is preserved.
    #[error("evaluation aborted: {reason}")]
    EvalAborted {
        reason: String,
        partial: Box<crate::harness::MetricReport>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
