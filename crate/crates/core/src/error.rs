use thiserror::Error;

/// Error taxonomy shared by every module.
///
/// The CLI maps these onto process exit codes: `Domain` and `Validation`
/// are configuration-class failures, `Numeric` covers quadrature and
/// integrator breakdowns, `Statistics` and `Degenerate` cover runs whose
/// data cannot support the requested analysis.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Input outside the physical or mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Structurally invalid data (mismatched grids, non-Hermitian state, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A numerical method failed to converge or lost integrity.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Not enough statistics to produce the requested estimate.
    #[error("statistics error: {0}")]
    Statistics(String),

    /// Spectrum or basis degenerate: the requested feature does not exist.
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
