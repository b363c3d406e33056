use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
///
/// Variants fall into four families (configuration, data, numeric, I/O),
/// each mapped to its own process exit code by [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: bad magic {found:?}, expected \"TSR1\"")]
    BadMagic { path: PathBuf, found: [u8; 4] },
    #[error("{path}: truncated, expected {expected} bytes but found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}: tensor rank is zero")]
    ZeroRank { path: PathBuf },
    #[error("count mismatch in {what}: expected {expected}, found {found}")]
    CountMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {what} at flat index {index}")]
    NonFinite { what: String, index: usize },
    #[error("label for unknown site '{site_id}' in taxonomy '{taxonomy}'")]
    UnknownSite { taxonomy: String, site_id: String },
    #[error("malformed input: {0}")]
    Format(String),

    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("non-finite gradient for parameter '{0}'")]
    NonFiniteGradient(String),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("gradient check failed: '{param}' relative error {rel_err:e} exceeds {tolerance:e}")]
    GradientMismatch {
        param: String,
        rel_err: f64,
        tolerance: f64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numeric, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::ZeroRank { .. }
            | Error::CountMismatch { .. }
            | Error::NonFinite { .. }
            | Error::UnknownSite { .. }
            | Error::Format(_) => 3,
            Error::Empty(_)
            | Error::Shape(_)
            | Error::InvalidArgument(_)
            | Error::Degenerate(_)
            | Error::NonFiniteGradient(_)
            | Error::NonFiniteLoss { .. }
            | Error::GradientMismatch { .. } => 4,
            Error::Io { .. } => 5,
        }
    }
}
