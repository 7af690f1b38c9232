use thiserror::Error;

/// Errors raised by the regularization pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension error: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("unstable step: tau * lambda(1) = {0} exceeds 1")]
    UnstableStep(f64),

    #[error("alpha floor infeasible: no grid point has ||1 - h||^2 >= {0}")]
    AlphaFloorInfeasible(f64),

    #[error("degenerate smoother: h is identically zero")]
    DegenerateSmoother,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("variance estimation impossible: ||1 - h||^2 = 0")]
    VarianceEstimationImpossible,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("root solver failed: residual {residual:e} exceeds tolerance {tolerance:e}")]
    RootNotConverged { residual: f64, tolerance: f64 },

    #[error("empty grid")]
    EmptyGrid,
}

impl Error {
    /// Whether the failure stems from floating-point behaviour rather than
    /// from malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RootNotConverged { .. }
                | Error::DegenerateSmoother
                | Error::VarianceEstimationImpossible
                | Error::DegenerateDesign(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
