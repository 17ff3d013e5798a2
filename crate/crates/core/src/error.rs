use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarrisError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarrisError {
    /// A parameter is outside the domain of the requested operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configured resource bound (event cap, truncation cap) was exceeded.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// A numerical routine did not reach its tolerance.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// Query time lies past a trajectory horizon.
    #[error("time {t} exceeds trajectory horizon {horizon}")]
    BeyondHorizon { t: f64, horizon: f64 },

    #[error("too few bins for a chi-square test ({0} after merging)")]
    TooFewBins(usize),
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(HarrisError::Domain(msg.into()))
}
