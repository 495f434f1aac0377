use thiserror::Error;

/// Crate-wide error type.
///
/// The CLI maps variants onto its exit-code contract: configuration errors
/// exit 2, training divergence exits 3, IO/format errors exit 4.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not compose.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An operation received an empty input it cannot act on.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Invalid configuration detected before any numeric work started.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed or out-of-contract runtime input.
    #[error("invalid input: {0}")]
    Input(String),

    /// A NaN or infinity surfaced where the contract requires finite values.
    #[error("non-finite value: {0}")]
    Numeric(String),

    /// Training cost became non-finite.
    #[error("training diverged at epoch {epoch} (learning rate {learning_rate:e})")]
    Diverged { epoch: usize, learning_rate: f64 },

    /// A metric is undefined for the given inputs (e.g. empty confusion matrix).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// File exists but is not in a format/version this build understands.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
