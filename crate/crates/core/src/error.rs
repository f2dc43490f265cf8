use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not symmetric (max relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:.6e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("matrix function produced a non-finite value at eigenvalue {eigenvalue}")]
    NonFiniteResult { eigenvalue: f64 },

    #[error("ratio denominator vanishes at eigenvalue {eigenvalue}")]
    SingularDenominator { eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid time {t} for horizon {horizon}")]
    InvalidTime { t: f64, horizon: f64 },

    #[error("quadrature rule needs {nodes} nodes, budget is {budget}")]
    BudgetExceeded { nodes: usize, budget: usize },

    #[error("overflow guard tripped: {0}")]
    OverflowGuard(String),
}

impl Error {
    /// Numeric failures (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteResult { .. } | Error::SingularDenominator { .. } | Error::OverflowGuard(_)
        )
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
