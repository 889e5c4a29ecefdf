use thiserror::Error;

/// Library-wide error type. Variants are grouped by failure class so callers
/// can map them onto process exit codes without string matching.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// State or derivative became non-finite during integration.
    #[error("integration diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    /// A dataset cannot be used for training or metrics, e.g. a derivative
    /// column with zero spread.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Loss, gradient, or fit objective became non-finite.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A registry query matched no records.
    #[error("empty selection: {0}")]
    EmptySelection(String),

    /// Too few samples for the requested operation (e.g. more line segments
    /// than the point count can support).
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The scaling-law optimizer lost a finite objective and stopped early.
    /// `best_formula` is the best finite state in the printable form, so it
    /// can be parsed back if needed.
    #[error("fit diverged after {iterations} iterations (best margin {best_margin}: {best_formula})")]
    FitDiverged { iterations: usize, best_margin: f64, best_formula: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),

    /// A binary artifact has the wrong magic, version, or layout.
    #[error("malformed file {path}: {detail}")]
    MalformedFile { path: String, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
