use thiserror::Error;

pub type Result<T> = std::result::Result<T, SptError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SptError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The two-outcome Fisher information has a removable singularity
    /// (xi is 0 or 1 at this displacement).
    #[error("Fisher information singular at r = {r}: xi = {xi}")]
    SingularFisher { r: f64, xi: f64 },

    #[error("displacement grid does not bracket a Fisher maximum: {0}")]
    GridTooCoarse(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl SptError {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        SptError::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            SptError::InvalidParameter { .. } | SptError::DimensionMismatch { .. }
        )
    }
}
