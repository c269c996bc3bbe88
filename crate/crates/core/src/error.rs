use thiserror::Error;

/// Errors raised by the design routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain the routine accepts.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two operands disagree on their dimension.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A value failed one of its type invariants.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// An iterative routine hit its iteration cap.
    #[error("{what} did not converge after {iterations} iterations (last residual {residual:.3e})")]
    Convergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    /// The constraint set is empty, e.g. more antennas than grid points.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Exhaustive enumeration would exceed the configured limit.
    #[error("refusing to enumerate C({m}, {n}) = {count} placements (limits: M <= {max_m}, at most {limit} placements)")]
    EnumerationGuard {
        m: usize,
        n: usize,
        count: u128,
        max_m: usize,
        limit: u128,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
