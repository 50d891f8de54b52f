//! Vectorized density operators and the Lindblad generator.
//!
//! Density operators are column-stacked, `v[j·d + i] = ρ[i, j]`, so that
//! `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.

use ndarray::Array1;

use crate::error::{QmeError, Result};
use crate::linalg::{self, CMatrix, CVector, C64, I, ONE};
use crate::operators::DensityOperator;

/// Relative singular-value threshold used for null-space detection.
pub const NULL_SPACE_TOL: f64 = 1e-10;

/// A jump operator `L_k` with its rate `γ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladChannel {
    pub operator: CMatrix,
    pub rate: f64,
}

impl LindbladChannel {
    pub fn new(operator: CMatrix, rate: f64) -> Result<Self> {
        linalg::ensure_square(&operator)?;
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(QmeError::InvalidArgument(format!("channel rate {rate} must be finite and >= 0")));
        }
        Ok(Self { operator, rate })
    }

    pub fn dim(&self) -> usize {
        self.operator.nrows()
    }

    /// `√γ L`
    pub fn folded(&self) -> CMatrix {
        let s = self.rate.sqrt();
        self.operator.mapv(|z| z * s)
    }
}

/// Generator of vectorized density-operator dynamics, `d vec(ρ)/dt = L vec(ρ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Liouvillian {
    matrix: CMatrix,
    dim: usize,
}

impl Liouvillian {
    /// Wraps a `d² × d²` matrix acting on column-stacked density vectors.
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        let n = linalg::ensure_square(&matrix)?;
        let dim = exact_sqrt(n).ok_or(QmeError::LengthNotSquare(n))?;
        Ok(Self { matrix, dim })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: linalg::zeros(dim * dim, dim * dim),
            dim,
        }
    }

    /// Hilbert-space dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// Applies the generator to a density matrix.
    pub fn apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        if rho.nrows() != self.dim || rho.ncols() != self.dim {
            return Err(QmeError::DimensionMismatch(format!(
                "state is {}x{}, generator acts on dimension {}",
                rho.nrows(),
                rho.ncols(),
                self.dim
            )));
        }
        devectorize(&self.matrix.dot(&vectorize(rho)), self.dim)
    }

    /// `L + c·M`
    pub fn add_scaled(&self, other: &Liouvillian, c: C64) -> Result<Liouvillian> {
        if other.dim != self.dim {
            return Err(QmeError::DimensionMismatch("generators differ in dimension".into()));
        }
        Ok(Liouvillian {
            matrix: &self.matrix + &other.matrix.mapv(|z| z * c),
            dim: self.dim,
        })
    }

    /// `‖vec(I)† L‖`, zero for a trace-preserving generator.
    pub fn trace_leakage(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for col in 0..d * d {
            let s: C64 = (0..d).map(|i| self.matrix[[i * d + i, col]]).sum();
            worst = worst.max(s.norm());
        }
        worst
    }
}

fn exact_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

/// Column-stacks a square matrix.
pub fn vectorize(rho: &CMatrix) -> CVector {
    let d = rho.nrows();
    Array1::from_shape_fn(d * rho.ncols(), |k| rho[[k % d, k / d]])
}

/// Inverse of [`vectorize`].
pub fn devectorize(v: &CVector, d: usize) -> Result<CMatrix> {
    if v.len() != d * d {
        return Err(QmeError::LengthNotSquare(v.len()));
    }
    Ok(CMatrix::from_shape_fn((d, d), |(i, j)| v[j * d + i]))
}

/// Inverse of [`vectorize`], inferring `d` from the length.
pub fn devectorize_square(v: &CVector) -> Result<CMatrix> {
    let d = exact_sqrt(v.len()).ok_or(QmeError::LengthNotSquare(v.len()))?;
    devectorize(v, d)
}

fn check_inputs(h: &CMatrix, channels: &[LindbladChannel]) -> Result<usize> {
    let d = linalg::ensure_square(h)?;
    for (k, ch) in channels.iter().enumerate() {
        if ch.dim() != d {
            return Err(QmeError::DimensionMismatch(format!(
                "channel {k} has dimension {}, Hamiltonian has {d}",
                ch.dim()
            )));
        }
    }
    Ok(d)
}

/// Superoperator of the commutator `−i[H, ·]`.
pub fn hamiltonian_superoperator(h: &CMatrix) -> CMatrix {
    let d = h.nrows();
    let id = linalg::identity(d);
    (linalg::kron(&id, h) - linalg::kron(&linalg::transpose(h), &id)).mapv(|z| -I * z)
}

/// Superoperator of `L ρ L† − ½{L†L, ρ}` for an operator with its rate folded in.
pub fn dissipator_superoperator(l: &CMatrix) -> CMatrix {
    let d = l.nrows();
    let id = linalg::identity(d);
    let ldl = linalg::dagger(l).dot(l);
    let jump = linalg::kron(&linalg::conj(l), l);
    let anti = linalg::kron(&id, &ldl) + linalg::kron(&linalg::transpose(&ldl), &id);
    jump - anti.mapv(|z| z * 0.5)
}

/// Assembles the Lindblad generator
/// `L = −i(I⊗H − Hᵀ⊗I) + Σ_k γ_k [L_k*⊗L_k − ½(I⊗L_k†L_k + L_kᵀL_k*⊗I)]`.
pub fn build_liouvillian(h: &CMatrix, channels: &[LindbladChannel]) -> Result<Liouvillian> {
    let d = check_inputs(h, channels)?;
    let dev = linalg::hermiticity_deviation(h);
    if dev > 1e-10 {
        return Err(QmeError::NonHermitianHamiltonian(dev));
    }
    let mut m = hamiltonian_superoperator(h);
    for ch in channels {
        if ch.rate > 0.0 {
            m = m + dissipator_superoperator(&ch.folded());
        }
    }
    Ok(Liouvillian { matrix: m, dim: d })
}

/// Right-hand side of the Lindblad equation evaluated with matrix products.
pub fn lindblad_rhs(rho: &CMatrix, h: &CMatrix, channels: &[LindbladChannel]) -> Result<CMatrix> {
    let d = check_inputs(h, channels)?;
    if rho.nrows() != d || rho.ncols() != d {
        return Err(QmeError::DimensionMismatch(format!(
            "state is {}x{}, Hamiltonian has dimension {d}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    let mut out = linalg::commutator(h, rho).mapv(|z| -I * z);
    for ch in channels {
        let l = &ch.operator;
        let ld = linalg::dagger(l);
        let ldl = ld.dot(l);
        let term = l.dot(rho).dot(&ld) - linalg::anticommutator(&ldl, rho).mapv(|z| z * 0.5);
        out = out + term.mapv(|z| z * ch.rate);
    }
    Ok(out)
}

/// Basis of the generator's null space, devectorized.
///
/// Elements with nonzero trace are rescaled to unit trace and replaced by
/// their Hermitian part. Traceless elements are returned as they come out
/// of the decomposition.
pub fn steady_states(l: &Liouvillian) -> Result<Vec<CMatrix>> {
    if l.dim == 1 {
        // A trace-preserving generator on a single level vanishes; only rounding remains.
        return Ok(vec![linalg::identity(1)]);
    }
    let basis = linalg::null_space(&l.matrix, NULL_SPACE_TOL)?;
    if basis.ncols() == 0 {
        let (s, _) = linalg::svd_right(&l.matrix)?;
        let smax = s.first().copied().unwrap_or(0.0);
        let smin = s.last().copied().unwrap_or(0.0);
        return Err(QmeError::EmptyNullSpace(if smax > 0.0 { smin / smax } else { smin }));
    }
    let d = l.dim;
    let mut out = Vec::with_capacity(basis.ncols());
    for col in basis.columns() {
        let m = devectorize(&col.to_owned(), d)?;
        let tr = linalg::trace(&m);
        if tr.norm() > 1e-10 * linalg::frobenius_norm(&m) {
            let scaled = m.mapv(|z| z / tr);
            let herm = (&scaled + &linalg::dagger(&scaled)).mapv(|z| z * 0.5);
            out.push(herm);
        } else {
            out.push(m);
        }
    }
    Ok(out)
}

/// The steady state of a generator whose null space is one-dimensional.
pub fn unique_steady_state(l: &Liouvillian) -> Result<DensityOperator> {
    let mut states = steady_states(l)?;
    if states.len() != 1 {
        return Err(QmeError::NonUniqueSteadyState(states.len()));
    }
    Ok(DensityOperator::from_matrix_unchecked(states.remove(0)))
}

/// `‖L vec(ρ)‖₂`
pub fn residual(l: &Liouvillian, rho: &CMatrix) -> f64 {
    linalg::vector_norm(&l.matrix.dot(&vectorize(rho)))
}

/// `vec(I)`
pub fn vectorized_identity(d: usize) -> CVector {
    vectorize(&linalg::identity(d)).mapv(|z| z * ONE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pauli::*;
    use crate::linalg::{c, re};

    fn lowering() -> CMatrix {
        ket_bra(2, 0, 1)
    }

    #[test]
    fn vec_identity() {
        assert_eq!(vectorize(&linalg::identity(2)).to_vec(), vec![re(1.0), re(0.0), re(0.0), re(1.0)]);
    }

    #[test]
    fn devectorize_rejects_bad_length() {
        let v = Array1::from(vec![re(1.0); 5]);
        assert_eq!(devectorize_square(&v), Err(QmeError::LengthNotSquare(5)));
    }

    #[test]
    fn empty_generator_is_zero() {
        let l = build_liouvillian(&linalg::zeros(2, 2), &[]).unwrap();
        assert_eq!(l.matrix(), &linalg::zeros(4, 4));
        assert_eq!(steady_states(&l).unwrap().len(), 4);
    }

    #[test]
    fn rejects_non_hermitian_hamiltonian() {
        let h = lowering();
        assert!(matches!(build_liouvillian(&h, &[]), Err(QmeError::NonHermitianHamiltonian(_))));
    }

    #[test]
    fn rejects_mismatched_channel() {
        let ch = LindbladChannel::new(linalg::identity(3), 1.0).unwrap();
        assert!(matches!(build_liouvillian(&sigma_z(), &[ch]), Err(QmeError::DimensionMismatch(_))));
        assert!(LindbladChannel::new(sigma_x(), -1.0).is_err());
    }

    #[test]
    fn amplitude_damping_rhs_on_excited_state() {
        let gamma = 0.7;
        let ch = LindbladChannel::new(lowering(), gamma).unwrap();
        let rho_e = ket_bra(2, 1, 1);
        let rhs = lindblad_rhs(&rho_e, &linalg::zeros(2, 2), &[ch]).unwrap();
        assert!((rhs[[0, 0]] - re(gamma)).norm() < 1e-15);
        assert!((rhs[[1, 1]] - re(-gamma)).norm() < 1e-15);
    }

    #[test]
    fn coherent_rhs() {
        let plus = CMatrix::from_elem((2, 2), re(0.5));
        let rhs = lindblad_rhs(&plus, &sigma_z(), &[]).unwrap();
        let expected = linalg::commutator(&sigma_z(), &plus).mapv(|z| -I * z);
        assert_eq!(rhs, expected);
    }

    #[test]
    fn relaxation_has_ground_steady_state() {
        let ch = LindbladChannel::new(lowering(), 0.4).unwrap();
        let h = linalg::diag(&[re(0.0), re(1.3)]);
        let l = build_liouvillian(&h, &[ch]).unwrap();
        let ss = steady_states(&l).unwrap();
        assert_eq!(ss.len(), 1);
        assert!(linalg::max_abs_diff(&ss[0], &ket_bra(2, 0, 0)) < 1e-12);
    }

    #[test]
    fn driven_dephasing_null_space_is_two_dimensional() {
        // L_0 proportional to the identity leaves only the coherent part, whose
        // stationary states are spanned by the two eigenprojectors of H.
        let h = ndarray::array![[re(0.0), re(0.5)], [re(0.5), re(1.0)]];
        let ch = LindbladChannel::new(linalg::identity(2), 0.2).unwrap();
        let l = build_liouvillian(&h, &[ch]).unwrap();
        let ss = steady_states(&l).unwrap();
        assert_eq!(ss.len(), 2);
        for m in &ss {
            assert!(residual(&l, m) < 1e-12);
        }
    }

    #[test]
    fn rhs_matches_generator_on_fixed_example() {
        let h = ndarray::array![[re(0.3), c(0.1, -0.2)], [c(0.1, 0.2), re(-0.5)]];
        let ch = vec![
            LindbladChannel::new(lowering(), 0.3).unwrap(),
            LindbladChannel::new(sigma_z(), 0.1).unwrap(),
        ];
        let rho = ndarray::array![[re(0.6), c(0.1, 0.25)], [c(0.1, -0.25), re(0.4)]];
        let l = build_liouvillian(&h, &ch).unwrap();
        let a = l.apply(&rho).unwrap();
        let b = lindblad_rhs(&rho, &h, &ch).unwrap();
        assert!(linalg::max_abs_diff(&a, &b) < 1e-14);
        assert!(l.trace_leakage() < 1e-14);
    }
}
