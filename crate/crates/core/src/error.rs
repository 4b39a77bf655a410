use thiserror::Error;

/// Errors produced by the chart library.
#[derive(Debug, Error)]
pub enum MpcError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("smoothing failed: no penalty value gave a usable fit")]
    SmoothingFailed,

    #[error("degenerate sample: pooled covariance is numerically zero")]
    DegenerateSample,

    #[error("ADMM did not converge after {iterations} iterations (primal residual {primal:.3e}, dual residual {dual:.3e})")]
    NotConverged {
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    #[error("non-PD evaluation: {0}")]
    NotPositiveDefinite(String),

    #[error("ARL target unreachable; increase l_seq_ic")]
    ArlUnreachable,

    #[error("infeasible scenario: {0}")]
    Infeasible(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl MpcError {
    /// Short stable identifier, used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            MpcError::InvalidInput(_) => "invalid_input",
            MpcError::DimensionMismatch(_) => "dimension_mismatch",
            MpcError::SmoothingFailed => "smoothing_failed",
            MpcError::DegenerateSample => "degenerate_sample",
            MpcError::NotConverged { .. } => "not_converged",
            MpcError::NotPositiveDefinite(_) => "not_positive_definite",
            MpcError::ArlUnreachable => "arl_unreachable",
            MpcError::Infeasible(_) => "infeasible",
            MpcError::Format(_) => "format",
            MpcError::Io(_) => "io",
            MpcError::Json(_) => "json",
            MpcError::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, MpcError>;
