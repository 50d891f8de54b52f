//! Dense solvers for open quantum systems.
//!
//! Density operators evolve under Lindblad, Bloch-Redfield or Pauli
//! generators written as matrices acting on column-stacked density vectors.
//! Periodically driven closed systems are handled through the Floquet
//! Hamiltonian, and stochastic unravelings are available through the
//! Monte Carlo wave-function method.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correlations;
pub mod error;
pub mod floquet;
pub mod linalg;
pub mod mcwf;
pub mod liouville;
pub mod operators;
pub mod propagation;
pub mod redfield;

pub use error::{QmeError, Result};
pub use linalg::{CMatrix, CVector, C64};
