use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("matrix is not expansive: eigenvalue modulus {modulus} <= 1 + 1e-9")]
    NotExpansive { modulus: f64 },

    #[error("singular matrix ({0})")]
    Singular(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("derivative order {requested} exceeds available smoothness {available}")]
    OrderTooHigh { requested: usize, available: usize },

    #[error("ambiguous order certificate: order {order} residual {residual:e} is below 10x tolerance {tol:e}")]
    Ambiguous { order: usize, residual: f64, tol: f64 },

    #[error("lattice tail sum diverges: last shell ratio {last_shell_ratio:.3e}, shell decay exponent {decay_exponent:.3}")]
    Divergent { last_shell_ratio: f64, decay_exponent: f64 },

    #[error("test function provides derivatives up to order {available}, order {requested} required")]
    MissingDerivatives { requested: usize, available: usize },

    #[error("quadrature did not converge after {levels} refinement levels")]
    Quadrature { levels: usize },

    #[error("grid of {points} points exceeds the memory guard of {limit}")]
    MemoryGuard { points: usize, limit: usize },

    #[error("active lattice set has {terms} terms, more than the limit {limit}")]
    ActiveSetTooLarge { terms: u128, limit: u128 },

    #[error("singular linear system (condition number {condition:e})")]
    SingularSystem { condition: f64 },

    #[error("not enough levels for a rate fit: need {needed}, have {have}")]
    InsufficientLevels { needed: usize, have: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, QpError>;

impl QpError {
    /// Whether the error stems from the inputs rather than from a numeric failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            QpError::Config(_)
                | QpError::Dimension { .. }
                | QpError::NotExpansive { .. }
                | QpError::Unsupported(_)
                | QpError::OrderTooHigh { .. }
                | QpError::MissingDerivatives { .. }
                | QpError::MemoryGuard { .. }
                | QpError::ActiveSetTooLarge { .. }
                | QpError::InsufficientLevels { .. }
        )
    }
}
