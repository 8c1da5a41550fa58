use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A parameter is outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An operation was requested for a scene outside its bidding region.
    #[error("wrong region: {0}")]
    WrongRegion(String),

    /// A distribution failed a structural check (mass, ordering, overlap).
    #[error("malformed distribution: {0}")]
    MalformedDistribution(String),

    /// A type mix of exactly zero or one makes the requested object collapse;
    /// callers must use the dedicated degenerate profiles.
    #[error("degenerate composition: {0}")]
    Degenerate(String),

    /// The evaluated bid carries an atom; the tie-aware payoff applies instead.
    #[error("bid {0} sits on an atom; use the tie-aware payoff")]
    AtomicBid(f64),

    /// A truncated series stopped before reaching the requested tail tolerance.
    #[error("series truncated with residual mass {residual:e} above tolerance")]
    Truncation { residual: f64 },

    /// An iterative solver failed to bracket or converge.
    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    /// A result was requested outside the hypotheses under which it holds.
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
