use thiserror::Error;

/// Errors raised across the library.
///
/// Variants split roughly into two families: validation problems with the
/// inputs (bad specs, malformed files, unknown names) and numerical failures
/// (non-finite propagation, non-positive-definite matrices). The CLI maps the
/// first family to exit code 1 and the second to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("unknown parameter name `{0}`")]
    UnknownParameter(String),

    #[error("time {time} lies outside the model grid starting at {origin}")]
    TimeOutsideGrid { time: f64, origin: f64 },

    #[error("non-finite latent value for process {process} at grid node {node} (t = {time})")]
    NonFinite {
        process: char,
        node: usize,
        time: f64,
    },

    #[error("marginal covariance of subject `{subject}` is not positive definite")]
    NotPositiveDefinite { subject: String },

    #[error("matrix is not positive definite: {0}")]
    Singular(String),

    #[error("objective evaluation failed: {0}")]
    Objective(String),

    #[error("fit did not converge: {0}")]
    NotConverged(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("too many failed bootstrap draws: {failed} of {total}")]
    BootstrapFailures { failed: usize, total: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::Singular(_)
                | Error::Objective(_)
                | Error::NotConverged(_)
                | Error::BootstrapFailures { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
