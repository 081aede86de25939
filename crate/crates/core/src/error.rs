use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes (block counts or block dims) disagree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Operands live on different bundles or measure spaces.
    #[error("structural mismatch: {0}")]
    StructureMismatch(String),

    /// An operation was given input outside its contract (e.g. non-Hermitian
    /// input to an eigensolver).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Bad argument (empty sequence, p < 1, unknown atom, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// Numerically verified structure does not hold (non-nested tower,
    /// closure blow-up).
    #[error("inconsistency: {0}")]
    Inconsistency(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off:e})")]
    NotConverged { sweeps: usize, off: f64 },
}
