use thiserror::Error;

/// Errors produced by the estimation and bound computations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{func}: argument out of domain ({msg})")]
    Domain { func: &'static str, msg: String },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("estimation failed: {0}")]
    EstimationFailure(String),

    #[error("parameter not identifiable: {0}")]
    Unidentifiable(String),

    #[error("non-regular regime (nu = {nu}): {msg}")]
    NonRegular { nu: f64, msg: String },

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(func: &'static str, msg: impl Into<String>) -> Error {
    Error::Domain {
        func,
        msg: msg.into(),
    }
}
