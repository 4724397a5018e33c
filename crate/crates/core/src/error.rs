use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A design search scanned every candidate up to its cap without
    /// meeting the power target.
    #[error("search exhausted: no candidate up to {cap} users reaches power {target}")]
    SearchExhausted { cap: u32, target: f64 },

    /// A computation produced a non-finite or otherwise unusable value.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
