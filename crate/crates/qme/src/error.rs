use thiserror::Error;

/// Errors raised by the solvers in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QmeError {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("vector of length {0} cannot be reshaped into a square matrix")]
    LengthNotSquare(usize),

    #[error("Hamiltonian is not Hermitian (deviation {0:.3e})")]
    NonHermitianHamiltonian(f64),

    #[error("operator is not Hermitian: {0}")]
    NonHermitian(String),

    #[error("invalid density operator: {0}")]
    InvalidState(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("null space of the generator is empty (smallest singular value {0:.3e})")]
    EmptyNullSpace(f64),

    #[error("generator is defective: eigenvector pairing failed (residual {0:.3e})")]
    DefectiveGenerator(f64),

    #[error("step size underflow at t = {t}: dt = {dt:.3e}")]
    StepSizeUnderflow { t: f64, dt: f64 },

    #[error("jump probability {0} >= 1; reduce the time step")]
    JumpBudgetExceeded(f64),

    #[error("state norm collapsed to {0:.3e}")]
    ZeroNorm(f64),

    #[error("Hamiltonian has degenerate levels (min spacing {0:.3e})")]
    DegenerateSpectrum(f64),

    #[error("steady state is not unique (null space dimension {0})")]
    NonUniqueSteadyState(usize),

    #[error("Floquet truncation not converged at N = {n}: shift {shift:.3e}")]
    TruncationNotConverged { n: usize, shift: f64 },

    #[error("one-period propagator is not unitary (deviation {0:.3e})")]
    NonUnitaryPropagator(f64),

    #[error("linear algebra failure: {0}")]
    Decomposition(String),
}

pub type Result<T> = std::result::Result<T, QmeError>;
