//! Error taxonomy shared by all modules.

/// Crate-wide error type.
///
/// `Domain` flags arguments outside an operation's documented domain,
/// `Tolerance` a quadrature run that exhausted its subdivision budget,
/// `Factorization` a covariance matrix that stayed indefinite after the
/// jitter escalation, and `Resolution` a statistical routine handed too few
/// samples, bins, or scales to say anything meaningful.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("tolerance not met: {0}")]
    Tolerance(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("insufficient resolution: {0}")]
    Resolution(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
