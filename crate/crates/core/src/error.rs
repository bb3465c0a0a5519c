use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An input failed validation before any computation started.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An action was not a member of the feasible set at its state.
    #[error("infeasible action at step {step}: {detail}")]
    InfeasibleAction { step: usize, detail: String },

    /// A query left the domain on which a function is defined; extrapolation
    /// is deliberately not supported.
    #[error("argument {value} outside domain [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },

    /// A caller violated an operation contract (e.g. a non-absorbing
    /// post-action value passed to the absorbing-set continuation).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// The model configuration is unusable (e.g. an empty feasible set at an
    /// intermediate step).
    #[error("model configuration error: {0}")]
    Configuration(String),

    /// The constrained least-squares solver failed to converge.
    #[error("QP solver failure after {iterations} iterations (KKT residual {kkt_residual:.3e}): {detail}")]
    SolverFailure {
        iterations: usize,
        kkt_residual: f64,
        detail: String,
    },

    /// Internal consistency failure; indicates a bug rather than bad input.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidInput(format!("{what} is not finite: {value}")))
    }
}
