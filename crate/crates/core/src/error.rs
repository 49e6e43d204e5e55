use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs are individually valid but inconsistent with one another.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The quantile formula for the Wasserstein distance on (R+, Λ_q) needs q ≤ p.
    #[error("closed form unavailable for p = {p}, q = {q} (requires q <= p)")]
    ClosedFormUnavailable { p: f64, q: f64 },

    #[error("instance too large: {0}")]
    Size(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("sinkhorn overflow at iteration {iteration}")]
    SinkhornOverflow { iteration: usize },

    #[error("degenerate equatorial sample at row {0}")]
    Degenerate(usize),

    #[error("invalid document: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}
