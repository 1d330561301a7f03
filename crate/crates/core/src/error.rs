use thiserror::Error;

/// Failure modes shared by every module of the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument fell outside the set on which the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A precondition of the form `p > 1 - g/gamma^2` (or a related feasibility
    /// requirement) does not hold.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Non-finite input or intermediate value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A matrix that must be positive definite is singular.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// A structural hypothesis on a model (positive inward drift, ellipticity, ...) fails.
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    /// Projection back into the closed domain failed.
    #[error("step rejected: {0}")]
    StepRejected(String),

    /// The scale function is only defined from the boundary when `r < 1/2`.
    #[error("scale function from the boundary is undefined for r = {0} (needs r < 1/2)")]
    ClassificationOnly(f64),

    /// Malformed model or coefficient description.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(label: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{label} contains a non-finite value")))
    }
}
