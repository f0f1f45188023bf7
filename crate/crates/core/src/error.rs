use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Variants are grouped by the exit code the `mch` binary maps them to:
/// configuration/input problems, sampling failures and numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("sampling failure: {0}")]
    Sampling(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Single-stage reweighting lost overlap with the target ensemble.
    /// `bound` is the single-stage value, reported as a bound only.
    #[error("reweighting overlap too small (effective sample size {ess:.2}); use staged reweighting. single-stage value {bound} is a bound only")]
    Overlap { ess: f64, bound: f64 },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}

impl Error {
    /// Process exit code: 2 config/input, 3 sampling, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Dimension(_)
            | Error::Domain(_)
            | Error::Usage(_)
            | Error::Io { .. }
            | Error::Parse { .. } => 2,
            Error::Sampling(_) | Error::Overlap { .. } => 3,
            Error::Numerical(_) => 4,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
