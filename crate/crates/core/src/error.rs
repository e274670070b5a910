use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid entry: {0}")]
    InvalidEntry(String),

    #[error("matrix is singular (pivot {pivot:e} below threshold {threshold:e})")]
    SingularMatrix { pivot: f64, threshold: f64 },

    #[error("equivalent system is singular at z = {0}")]
    SingularSystem(Complex64),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is not Hermitian (asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("iteration failed to converge: {0}")]
    ConvergenceFailure(String),

    #[error("spectral point {0} is not in C \\ R+")]
    InvalidSpectralPoint(Complex64),

    #[error(
        "fixed point not reached at z = {z} after {iterations} iterations (last change {change:e})"
    )]
    MaxIterExceeded {
        z: Complex64,
        iterations: usize,
        change: f64,
    },

    #[error("model carries no separable factors")]
    NotSeparable,

    #[error("quadrature budget exhausted (error estimate {estimate:e}, tolerance {tolerance:e})")]
    QuadratureFailure { estimate: f64, tolerance: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors raised because an iterative method did not settle.
    pub fn is_convergence(&self) -> bool {
        matches!(
            self,
            Error::MaxIterExceeded { .. }
                | Error::ConvergenceFailure(_)
                | Error::QuadratureFailure { .. }
        )
    }
}
