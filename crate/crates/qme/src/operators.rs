//! Quantum states and operator composition.
//!
//! Pure states, density operators, tensor products, direct sums, partial
//! traces and the usual state diagnostics (expectation values, purity and a
//! scalar "is this still a state" score).

use ndarray::Array1;

use crate::error::{QmeError, Result};
use crate::linalg::{self, CMatrix, CVector, C64, ZERO};

/// Hermiticity tolerance (Frobenius) for a valid density operator.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Trace tolerance for a valid density operator.
pub const TRACE_TOL: f64 = 1e-10;
/// Most negative eigenvalue tolerated in a valid density operator.
pub const POSITIVITY_TOL: f64 = 1e-10;
/// Deviations below this are reported as a perfect state score.
pub const SCORE_EXACT_TOL: f64 = 1e-12;

/// A normalized state vector `|ψ⟩ = Σ_j c_j |φ_j⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
}

impl PureState {
    /// Wraps amplitudes that must already be normalized to within 1e-12.
    pub fn new(amplitudes: CVector) -> Result<Self> {
        let norm = linalg::vector_norm(&amplitudes);
        if (norm * norm - 1.0).abs() > 1e-12 {
            return Err(QmeError::InvalidState(format!(
                "pure state has squared norm {}",
                norm * norm
            )));
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let norm = linalg::vector_norm(&amplitudes);
        if norm < 1e-300 {
            return Err(QmeError::ZeroNorm(norm));
        }
        Ok(Self {
            amplitudes: amplitudes.mapv(|z| z / norm),
        })
    }

    /// Computational basis vector `|index⟩`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = Array1::zeros(dim);
        v[index] = linalg::ONE;
        Self { amplitudes: v }
    }

    pub fn from_slice(amplitudes: &[C64]) -> Result<Self> {
        Self::normalized(Array1::from(amplitudes.to_vec()))
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amplitudes
    }

    /// `|ψ⟩⟨ψ|`
    pub fn projector(&self) -> CMatrix {
        let d = self.dim();
        CMatrix::from_shape_fn((d, d), |(i, j)| self.amplitudes[i] * self.amplitudes[j].conj())
    }

    pub fn to_density(&self) -> DensityOperator {
        DensityOperator {
            matrix: self.projector(),
        }
    }

    /// `|ψ⟩ ⊗ |φ⟩`
    pub fn tensor(&self, other: &PureState) -> PureState {
        let v = Array1::from_shape_fn(self.dim() * other.dim(), |k| {
            self.amplitudes[k / other.dim()] * other.amplitudes[k % other.dim()]
        });
        PureState { amplitudes: v }
    }
}

/// A density operator `ρ`: Hermitian, positive semidefinite, unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
}

impl DensityOperator {
    /// Validates the density-operator invariants before wrapping `matrix`.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        validate_density_matrix(&matrix)?;
        Ok(Self { matrix })
    }

    /// Wraps a matrix without checking the invariants. Used for propagated
    /// states, whose physicality is assessed separately with [`state_score`].
    pub fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        Self { matrix }
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        Self {
            matrix: linalg::pauli::ket_bra(dim, index, index),
        }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: linalg::identity(dim).mapv(|z| z / dim as f64),
        }
    }

    /// `Σ_j p_j |ψ_j⟩⟨ψ_j|` for a probability vector `p`.
    pub fn mixture(components: &[(f64, PureState)]) -> Result<Self> {
        let Some((_, first)) = components.first() else {
            return Err(QmeError::InvalidArgument("empty mixture".into()));
        };
        let d = first.dim();
        let mut m = linalg::zeros(d, d);
        let mut total = 0.0;
        for (p, psi) in components {
            if *p < 0.0 {
                return Err(QmeError::InvalidArgument(format!("negative weight {p}")));
            }
            if psi.dim() != d {
                return Err(QmeError::DimensionMismatch("mixture components differ in dimension".into()));
            }
            m = m + psi.projector().mapv(|z| z * *p);
            total += p;
        }
        if (total - 1.0).abs() > TRACE_TOL {
            return Err(QmeError::InvalidArgument(format!("weights sum to {total}")));
        }
        Ok(Self { matrix: m })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// Diagonal elements as real probabilities.
    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diag().iter().map(|z| z.re).collect()
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.matrix)
    }
}

fn validate_density_matrix(m: &CMatrix) -> Result<()> {
    let s = state_score(m)?;
    if s.herm_dev > HERMITICITY_TOL {
        return Err(QmeError::InvalidState(format!("not Hermitian (deviation {:.3e})", s.herm_dev)));
    }
    if s.trace_dev > TRACE_TOL {
        return Err(QmeError::InvalidState(format!("trace deviates from 1 by {:.3e}", s.trace_dev)));
    }
    if s.pos_dev > POSITIVITY_TOL {
        return Err(QmeError::InvalidState(format!(
            "negative eigenvalue {:.3e}",
            -s.pos_dev
        )));
    }
    Ok(())
}

/// Expectation value of an observable in a state.
pub trait Expectation {
    fn expectation(&self, observable: &CMatrix) -> Result<C64>;
}

impl Expectation for DensityOperator {
    /// `Tr[Aρ]`
    fn expectation(&self, observable: &CMatrix) -> Result<C64> {
        check_conformable(observable, self.dim())?;
        // Tr[Aρ] = Σ_ij A_ij ρ_ji, avoids forming the product.
        let d = self.dim();
        let mut acc = ZERO;
        for i in 0..d {
            for j in 0..d {
                acc += observable[[i, j]] * self.matrix[[j, i]];
            }
        }
        Ok(acc)
    }
}

impl Expectation for PureState {
    /// `⟨ψ|A|ψ⟩`
    fn expectation(&self, observable: &CMatrix) -> Result<C64> {
        check_conformable(observable, self.dim())?;
        let av = observable.dot(&self.amplitudes);
        Ok(self.amplitudes.iter().zip(av.iter()).map(|(c, a)| c.conj() * a).sum())
    }
}

/// Free-function form of [`Expectation::expectation`].
pub fn expectation<S: Expectation + ?Sized>(state: &S, observable: &CMatrix) -> Result<C64> {
    state.expectation(observable)
}

fn check_conformable(observable: &CMatrix, dim: usize) -> Result<()> {
    if observable.nrows() != dim || observable.ncols() != dim {
        return Err(QmeError::DimensionMismatch(format!(
            "observable is {}x{}, state has dimension {}",
            observable.nrows(),
            observable.ncols(),
            dim
        )));
    }
    Ok(())
}

/// Kronecker (tensor) product `A ⊗ B`.
pub fn tensor_product(a: &CMatrix, b: &CMatrix) -> CMatrix {
    linalg::kron(a, b)
}

/// Block-diagonal direct sum `A ⊕ B`.
pub fn direct_sum(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let da = linalg::ensure_square(a)?;
    let db = linalg::ensure_square(b)?;
    let mut m = linalg::zeros(da + db, da + db);
    m.slice_mut(ndarray::s![..da, ..da]).assign(a);
    m.slice_mut(ndarray::s![da.., da..]).assign(b);
    Ok(m)
}

/// Which factor of a bipartite space to keep when tracing out the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    First,
    Second,
}

/// Partial trace of a bipartite operator with factor dimensions `(d1, d2)`.
pub fn partial_trace_matrix(m: &CMatrix, dims: (usize, usize), keep: Subsystem) -> Result<CMatrix> {
    let n = linalg::ensure_square(m)?;
    let (d1, d2) = dims;
    if d1 * d2 != n {
        return Err(QmeError::DimensionMismatch(format!(
            "partial trace: {d1}x{d2} != {n}"
        )));
    }
    Ok(match keep {
        Subsystem::First => CMatrix::from_shape_fn((d1, d1), |(i, j)| {
            (0..d2).map(|k| m[[i * d2 + k, j * d2 + k]]).sum()
        }),
        Subsystem::Second => CMatrix::from_shape_fn((d2, d2), |(i, j)| {
            (0..d1).map(|k| m[[k * d2 + i, k * d2 + j]]).sum()
        }),
    })
}

/// Reduced density operator of one factor of a bipartite state.
pub fn partial_trace(rho: &DensityOperator, dims: (usize, usize), keep: Subsystem) -> Result<DensityOperator> {
    Ok(DensityOperator::from_matrix_unchecked(partial_trace_matrix(
        rho.matrix(),
        dims,
        keep,
    )?))
}

/// `Tr[ρ²]`
pub fn purity(rho: &DensityOperator) -> f64 {
    // Tr[ρ²] = Σ_ij ρ_ij ρ_ji = Σ_ij |ρ_ij|² for Hermitian ρ; use the general form.
    let m = rho.matrix();
    let d = rho.dim();
    let mut acc = ZERO;
    for i in 0..d {
        for j in 0..d {
            acc += m[[i, j]] * m[[j, i]];
        }
    }
    acc.re
}

/// Deviation of a matrix from the density-operator conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateScore {
    /// `1 − (herm_dev + trace_dev + pos_dev)`, exactly 1 for valid states.
    pub score: f64,
    /// `‖m − m†‖_F`
    pub herm_dev: f64,
    /// `|Tr m − 1|`
    pub trace_dev: f64,
    /// `max(0, −λ_min(½(m + m†)))`
    pub pos_dev: f64,
}

impl StateScore {
    pub fn is_state(&self) -> bool {
        self.score == 1.0
    }
}

/// Scores how far `m` is from being a density operator.
pub fn state_score(m: &CMatrix) -> Result<StateScore> {
    linalg::ensure_square(m)?;
    let herm_dev = linalg::hermiticity_deviation(m);
    let trace_dev = (linalg::trace(m) - linalg::ONE).norm();
    let sym = (m + &linalg::dagger(m)).mapv(|z| z * 0.5);
    let lambda_min = linalg::eigvalsh(&sym)?.first().copied().unwrap_or(0.0);
    let pos_dev = (-lambda_min).max(0.0);
    let exact = herm_dev <= SCORE_EXACT_TOL && trace_dev <= SCORE_EXACT_TOL && pos_dev <= SCORE_EXACT_TOL;
    let score = if exact {
        1.0
    } else {
        1.0 - (herm_dev + trace_dev + pos_dev)
    };
    Ok(StateScore {
        score,
        herm_dev,
        trace_dev,
        pos_dev,
    })
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &CMatrix) -> Result<f64> {
    let sym = (m + &linalg::dagger(m)).mapv(|z| z * 0.5);
    Ok(linalg::eigvalsh(&sym)?.first().copied().unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pauli::*;
    use crate::linalg::{c, from_real_rows, identity, re};
    use std::f64::consts::FRAC_PI_4;

    fn bell(theta: f64) -> DensityOperator {
        let mut v = Array1::zeros(4);
        v[0] = re(theta.cos());
        v[3] = re(theta.sin());
        PureState::new(v).unwrap().to_density()
    }

    #[test]
    fn identity_tensor_identity() {
        assert_eq!(tensor_product(&identity(2), &identity(2)), identity(4));
    }

    #[test]
    fn ket_zero_zero() {
        let k0 = PureState::basis(2, 0);
        let k00 = k0.tensor(&k0);
        assert_eq!(k00.amplitudes().to_vec(), vec![re(1.0), re(0.0), re(0.0), re(0.0)]);
    }

    #[test]
    fn direct_sum_examples() {
        let i5 = direct_sum(&identity(2), &identity(3)).unwrap();
        assert_eq!(i5, identity(5));
        let m = direct_sum(&sigma_z(), &from_real_rows(&[&[5.0]])).unwrap();
        assert_eq!(m, linalg::diag(&[re(1.0), re(-1.0), re(5.0)]));
        let bad = from_real_rows(&[&[1.0, 2.0]]);
        assert!(matches!(direct_sum(&bad, &identity(2)), Err(QmeError::NonSquare { .. })));
    }

    #[test]
    fn bell_marginal_is_maximally_mixed() {
        let r1 = partial_trace(&bell(FRAC_PI_4), (2, 2), Subsystem::First).unwrap();
        assert!(linalg::max_abs_diff(r1.matrix(), DensityOperator::maximally_mixed(2).matrix()) < 1e-15);
        assert!((purity(&r1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn product_state_partial_trace() {
        let a = DensityOperator::mixture(&[(0.3, PureState::basis(2, 0)), (0.7, PureState::basis(2, 1))]).unwrap();
        let b = DensityOperator::maximally_mixed(3);
        let joint = DensityOperator::new(tensor_product(a.matrix(), b.matrix())).unwrap();
        let r = partial_trace(&joint, (2, 3), Subsystem::First).unwrap();
        assert!(linalg::max_abs_diff(r.matrix(), a.matrix()) < 1e-15);
        let r2 = partial_trace(&joint, (2, 3), Subsystem::Second).unwrap();
        assert!(linalg::max_abs_diff(r2.matrix(), b.matrix()) < 1e-15);
    }

    #[test]
    fn partial_trace_dimension_mismatch() {
        let rho = DensityOperator::maximally_mixed(4);
        assert!(matches!(
            partial_trace(&rho, (3, 2), Subsystem::First),
            Err(QmeError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn expectation_examples() {
        let rho = DensityOperator::maximally_mixed(3);
        assert!((rho.expectation(&identity(3)).unwrap() - re(1.0)).norm() < 1e-15);
        let zero = PureState::basis(2, 0);
        assert_eq!(zero.expectation(&sigma_z()).unwrap(), re(1.0));
        assert_eq!(zero.to_density().expectation(&sigma_z()).unwrap(), re(1.0));
        assert!(rho.expectation(&identity(2)).is_err());
    }

    #[test]
    fn mixed_expectation_is_convex_combination() {
        // d = 3 mixture with weights {0.1, 0.3, 0.6} over an orthonormal set.
        let s = 1.0 / 2f64.sqrt();
        let psi = [
            PureState::from_slice(&[re(s), re(s), re(0.0)]).unwrap(),
            PureState::from_slice(&[re(s), re(-s), re(0.0)]).unwrap(),
            PureState::from_slice(&[re(0.0), re(0.0), c(0.0, 1.0)]).unwrap(),
        ];
        let p = [0.1, 0.3, 0.6];
        let rho = DensityOperator::mixture(&[(p[0], psi[0].clone()), (p[1], psi[1].clone()), (p[2], psi[2].clone())])
            .unwrap();
        let a = ndarray::array![
            [re(1.0), c(0.5, 0.2), re(0.0)],
            [c(0.5, -0.2), re(-1.0), re(2.0)],
            [re(0.0), re(2.0), re(0.5)]
        ];
        let direct = rho.expectation(&a).unwrap();
        let weighted: C64 = (0..3).map(|k| psi[k].expectation(&a).unwrap() * p[k]).sum();
        assert!((direct - weighted).norm() < 1e-14);
        assert!(direct.im.abs() < 1e-12);
    }

    #[test]
    fn purity_bounds() {
        assert!((purity(&PureState::basis(3, 1).to_density()) - 1.0).abs() < 1e-15);
        assert!((purity(&DensityOperator::maximally_mixed(4)) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn score_examples() {
        let s = state_score(DensityOperator::maximally_mixed(2).matrix()).unwrap();
        assert_eq!(s.score, 1.0);
        assert_eq!((s.herm_dev, s.trace_dev, s.pos_dev), (0.0, 0.0, 0.0));

        let s = state_score(&linalg::diag(&[re(1.5), re(-0.5)])).unwrap();
        assert!(s.herm_dev.abs() < 1e-15);
        assert!(s.trace_dev.abs() < 1e-15);
        assert!((s.pos_dev - 0.5).abs() < 1e-14);
        assert!((s.score - 0.5).abs() < 1e-14);
    }

    #[test]
    fn density_constructor_rejects_invalid() {
        assert!(DensityOperator::new(linalg::diag(&[re(1.5), re(-0.5)])).is_err());
        assert!(DensityOperator::new(linalg::diag(&[re(0.5), re(0.4)])).is_err());
        assert!(DensityOperator::new(sigma_y().mapv(|z| z * 0.1) + identity(2).mapv(|z| z * 0.5)).is_ok());
        assert!(PureState::new(Array1::from(vec![re(1.0), re(1.0)])).is_err());
    }
}
