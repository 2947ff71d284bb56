use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent user configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    Dimension {
        context: &'static str,
        expected: String,
        found: String,
    },

    /// `C P Cᵀ + R` could not be inverted reliably.
    #[error("singular innovation covariance at step {step} (reciprocal condition {rcond:.3e})")]
    SingularInnovation { step: usize, rcond: f64 },

    #[error("LQR synthesis failed: {reason} (residual {residual:.3e} after {iterations} iterations)")]
    Synthesis {
        reason: &'static str,
        residual: f64,
        iterations: usize,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("infeasible safety constraint at step {step} (violation {violation:.3e})")]
    Infeasible { step: usize, violation: f64 },

    #[error("failed to parse configuration: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Errors caused by the input rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Dimension { .. } | Error::Parse(_) | Error::Io(_)
        )
    }
}
