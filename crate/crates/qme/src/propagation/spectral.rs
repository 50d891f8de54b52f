use ndarray::Array1;
use rayon::prelude::*;

use super::{check_state, Trajectory};
use crate::error::{QmeError, Result};
use crate::linalg::{self, CMatrix, CVector, C64, I};
use crate::liouville::{devectorize, vectorize, Liouvillian};
use crate::operators::DensityOperator;

/// Default imaginary offset used to split degenerate eigenvalues.
pub const DEFAULT_JITTER: f64 = 1e-14;

const BIORTHO_TOL: f64 = 1e-8;
const MAX_CONDITION: f64 = 1e12;

/// Eigenvalues of a generator with paired right and left eigenvectors,
/// normalized so that `L̂_i† R̂_j = δ_ij`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<C64>,
    /// Right eigenvectors as columns.
    pub right_vectors: CMatrix,
    /// Left eigenvectors as columns.
    pub left_vectors: CMatrix,
}

impl SpectralDecomposition {
    /// Diagonalizes `l`. The left vectors are the conjugated rows of `R⁻¹`,
    /// which makes the pairing bi-orthonormal whenever `R` is invertible.
    pub fn new(l: &Liouvillian) -> Result<Self> {
        let m = l.matrix();
        let n = m.nrows();
        let (eigenvalues, right) = linalg::eig(m)?;
        let r_inv = linalg::inverse(&right).map_err(|_| QmeError::DefectiveGenerator(f64::INFINITY))?;
        if !linalg::all_finite(&r_inv) {
            return Err(QmeError::DefectiveGenerator(f64::INFINITY));
        }
        let cond = linalg::one_norm(&right) * linalg::one_norm(&r_inv);
        if cond > MAX_CONDITION {
            return Err(QmeError::DefectiveGenerator(cond));
        }
        let gram = r_inv.dot(&right);
        let ortho = linalg::max_abs_diff(&gram, &linalg::identity(n));
        if ortho > BIORTHO_TOL {
            return Err(QmeError::DefectiveGenerator(ortho));
        }
        let left = linalg::dagger(&r_inv);
        Ok(Self {
            eigenvalues,
            right_vectors: right,
            left_vectors: left,
        })
    }

    /// Largest `|L̂_i† R̂_j − δ_ij|`.
    pub fn biorthogonality_error(&self) -> f64 {
        let gram = linalg::dagger(&self.left_vectors).dot(&self.right_vectors);
        linalg::max_abs_diff(&gram, &linalg::identity(gram.nrows()))
    }

    /// Largest relative eigen-equation residual `‖L R̂_k − λ_k R̂_k‖ / ‖R̂_k‖`.
    pub fn eigen_residual(&self, l: &Liouvillian) -> f64 {
        let lr = l.matrix().dot(&self.right_vectors);
        let scale = linalg::operator_norm(l.matrix()).unwrap_or(1.0).max(1.0);
        (0..self.eigenvalues.len())
            .map(|k| {
                let col = self.right_vectors.column(k);
                let res: f64 = lr
                    .column(k)
                    .iter()
                    .zip(col.iter())
                    .map(|(a, b)| (a - self.eigenvalues[k] * b).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                res / (norm * scale)
            })
            .fold(0.0, f64::max)
    }

    /// Expansion coefficients `L̂_k† v`.
    pub fn coefficients(&self, v: &CVector) -> CVector {
        linalg::dagger(&self.left_vectors).dot(v)
    }

    /// `Σ_k c_k R̂_k e^{λ_k t}`
    pub fn evolve(&self, coefficients: &CVector, t: f64) -> CVector {
        let weighted: CVector = Array1::from_shape_fn(coefficients.len(), |k| coefficients[k] * (self.eigenvalues[k] * t).exp());
        self.right_vectors.dot(&weighted)
    }
}

/// Adds `i·eps` to every entry of the generator.
pub fn jitter(l: &Liouvillian, eps: f64) -> Liouvillian {
    if eps == 0.0 {
        return l.clone();
    }
    let shift = I * eps;
    Liouvillian::from_matrix(l.matrix().mapv(|z| z + shift)).expect("shape unchanged")
}

/// `ρ(t) = Σ_k (L̂_k† vec ρ₀) R̂_k e^{λ_k t}` at each requested time.
pub fn spectral_solution(l: &Liouvillian, rho0: &DensityOperator, times: &[f64]) -> Result<Trajectory> {
    check_state(l, rho0)?;
    let dec = SpectralDecomposition::new(l)?;
    evaluate(&dec, l.dim(), rho0, times)
}

/// Like [`spectral_solution`], but retries on a jittered generator when the
/// eigenvector pairing fails.
pub fn spectral_solution_with_fallback(
    l: &Liouvillian,
    rho0: &DensityOperator,
    times: &[f64],
    eps: f64,
) -> Result<Trajectory> {
    match spectral_solution(l, rho0, times) {
        Err(QmeError::DefectiveGenerator(res)) => {
            log::warn!("eigenvector pairing failed (residual {res:.3e}); retrying with jitter {eps:.1e}");
            spectral_solution(&jitter(l, eps), rho0, times)
        }
        other => other,
    }
}

fn evaluate(dec: &SpectralDecomposition, d: usize, rho0: &DensityOperator, times: &[f64]) -> Result<Trajectory> {
    let coeffs = dec.coefficients(&vectorize(rho0.matrix()));
    let states: Vec<Result<DensityOperator>> = times
        .par_iter()
        .map(|&t| Ok(DensityOperator::from_matrix_unchecked(devectorize(&dec.evolve(&coeffs, t), d)?)))
        .collect();
    let mut out = Trajectory::with_capacity(times.len());
    for (&t, s) in times.iter().zip(states) {
        out.push(t, s?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pauli::*;
    use crate::linalg::{c, re};
    use crate::liouville::{build_liouvillian, LindbladChannel};
    use crate::propagation::propagate_expm_grid;

    fn svd_example() -> (Liouvillian, DensityOperator) {
        let h = sigma_x().mapv(|z| z * 0.5);
        let ch = LindbladChannel::new(sigma_x(), 0.1).unwrap();
        let l = build_liouvillian(&h, &[ch]).unwrap();
        (l, DensityOperator::basis(2, 1))
    }

    #[test]
    fn matches_expm() {
        // Coherent drive plus a non-commuting channel keeps the spectrum non-degenerate.
        let h = ndarray::array![[re(0.0), re(0.4)], [re(0.4), re(1.0)]];
        let ch = [
            LindbladChannel::new(ket_bra(2, 0, 1), 0.2).unwrap(),
            LindbladChannel::new(sigma_z(), 0.07).unwrap(),
        ];
        let l = build_liouvillian(&h, &ch).unwrap();
        let rho0 = DensityOperator::basis(2, 1);
        let times: Vec<f64> = (0..100).map(|k| 0.1 * k as f64).collect();
        let a = spectral_solution(&l, &rho0, &times).unwrap();
        let b = propagate_expm_grid(&l, &rho0, &times).unwrap();
        assert!(a.max_deviation(&b) < 1e-8);
    }

    #[test]
    fn decomposition_invariants() {
        let (l, _) = svd_example();
        let dec = SpectralDecomposition::new(&jitter(&l, DEFAULT_JITTER)).unwrap();
        assert!(dec.biorthogonality_error() < 1e-8);
        assert!(dec.eigen_residual(&l) < 1e-8);
    }

    #[test]
    fn diagonal_generator() {
        let rates = [re(0.0), c(-0.3, 1.0), c(-0.3, -1.0), re(0.0)];
        let l = Liouvillian::from_matrix(linalg::diag(&rates)).unwrap();
        let rho0 = DensityOperator::new(CMatrix::from_elem((2, 2), re(0.5))).unwrap();
        let traj = spectral_solution(&l, &rho0, &[2.0]).unwrap();
        let coh = traj.states[0].matrix()[[1, 0]];
        assert!((coh - re(0.5) * (rates[1] * 2.0).exp()).norm() < 1e-14);
    }

    #[test]
    fn jitter_zero_is_identity() {
        let (l, _) = svd_example();
        assert_eq!(jitter(&l, 0.0), l);
    }

    #[test]
    fn defective_generator_recovers_with_jitter() {
        // A Jordan block at -1 next to two simple eigenvalues: not diagonalizable.
        let mut m = linalg::diag(&[re(-1.0), re(-1.0), re(-2.0), re(-3.0)]);
        m[[0, 1]] = re(1.0);
        let l = Liouvillian::from_matrix(m).unwrap();
        let rho0 = DensityOperator::maximally_mixed(2);
        assert!(matches!(spectral_solution(&l, &rho0, &[1.0]), Err(QmeError::DefectiveGenerator(_))));
        let jittered = spectral_solution(&jitter(&l, 1e-10), &rho0, &[1.0]).unwrap();
        let exact = crate::propagation::propagate_expm(&l, &rho0, 1.0).unwrap();
        assert!(linalg::max_abs_diff(jittered.states[0].matrix(), exact.matrix()) < 1e-4);
    }
}
