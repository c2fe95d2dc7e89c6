use thiserror::Error;

/// Errors surfaced by the construction and validation layers.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("quaternionic dimension parameter n must be at least 1")]
    ZeroDimension,

    #[error("operation requires n >= 2 (got n = {0})")]
    DimensionTooSmall(usize),

    #[error("slot index {slot} out of range for order-{order} tensor")]
    SlotOutOfRange { slot: usize, order: usize },

    #[error("tensor order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },

    #[error("tensor order {order} too small, need at least {need}")]
    OrderTooSmall { order: usize, need: usize },

    #[error("tensor dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("declared symmetry violated: {0} (residual {1:.3e})")]
    SymmetryViolation(&'static str, f64),

    #[error("projector algebra failed: {0} (residual {1:.3e})")]
    ProjectorFault(&'static str, f64),

    #[error("subspace is not invariant under the Lie algebra action (residual {0:.3e})")]
    SpaceNotInvariant(f64),

    #[error("eigenvalue clustering ambiguous: gap {0:.3e} below threshold")]
    AmbiguousClustering(f64),

    #[error("unexpected isotypic content: {0}")]
    UnexpectedIsotypic(String),

    #[error("admissibility residual {residual:.3e} exceeds tolerance {tol:.3e} ({which})")]
    Inadmissible { which: &'static str, residual: f64, tol: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
