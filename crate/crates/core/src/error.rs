use thiserror::Error;

/// Errors raised by the model, the estimators and the fitting code.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid law: parameter `{param}` = {value} {reason}")]
    InvalidLaw {
        param: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no accepted samples: {0}")]
    NoSample(String),

    /// A clan outgrew the 2^62 cap; the replicate is aborted rather than truncated.
    #[error("clan size overflow at generation {generation} (cap 2^62)")]
    Overflow { generation: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("lattice law refused: {0}")]
    Lattice(String),

    #[error("unknown functional `{0}`")]
    UnknownFunctional(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
