//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    /// An evaluation point lies outside the domain of a curve, surface or grid.
    #[error("domain error: {0}")]
    Domain(String),

    /// An argument violates a precondition (e.g. `a > b` for an interval).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A constructed object violates a structural invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// The marital layer series did not decay below the truncation threshold
    /// within the layer cap.
    #[error(
        "layer series not converged: residual mass {residual:.3e} after {nu_cap} layers \
         (threshold {threshold:.3e})"
    )]
    Truncation {
        nu_cap: usize,
        residual: f64,
        threshold: f64,
    },

    /// The requested operation is not defined for this policy kind.
    #[error("operation not supported for policy kind {0}")]
    UnsupportedPolicy(&'static str),

    /// The conditional spouse-age density is undefined because the marriage
    /// probability is below the definedness floor.
    #[error("conditional spouse-age density undefined at t = {t}: g = {g:.3e} is below the floor")]
    UndefinedConditional { t: f64, g: f64 },

    /// Two gridded quantities do not share a compatible grid.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Scenario configuration could not be parsed or failed validation.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EngineError>;
