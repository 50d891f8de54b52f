use super::check_state;
use crate::error::{QmeError, Result};
use crate::linalg::{self, CMatrix};
use crate::liouville::{devectorize, vectorize, Liouvillian};
use crate::operators::DensityOperator;

/// Lie-Trotter splitting `[e^{L₁τ} e^{L₂τ}]ⁿ` with `τ = t/n`, optionally
/// multiplied on each step by the first Zassenhaus correction
/// `e^{−½[L₁,L₂]τ²}`.
pub fn trotter_propagate(
    l1: &Liouvillian,
    l2: &Liouvillian,
    rho0: &DensityOperator,
    t: f64,
    n: usize,
    correction: bool,
) -> Result<DensityOperator> {
    check_state(l1, rho0)?;
    check_state(l2, rho0)?;
    if n == 0 {
        return Err(QmeError::InvalidArgument("Trotter step count must be >= 1".into()));
    }
    let step = trotter_step(l1.matrix(), l2.matrix(), t / n as f64, correction);
    let mut v = vectorize(rho0.matrix());
    for _ in 0..n {
        v = step.dot(&v);
    }
    Ok(DensityOperator::from_matrix_unchecked(devectorize(&v, l1.dim())?))
}

fn trotter_step(l1: &CMatrix, l2: &CMatrix, tau: f64, correction: bool) -> CMatrix {
    let e1 = linalg::expm(&l1.mapv(|z| z * tau));
    let e2 = linalg::expm(&l2.mapv(|z| z * tau));
    let product = e1.dot(&e2);
    if correction {
        let comm = linalg::commutator(l1, l2).mapv(|z| z * (-0.5 * tau * tau));
        product.dot(&linalg::expm(&comm))
    } else {
        product
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pauli::*;
    use crate::liouville::{build_liouvillian, LindbladChannel};
    use crate::propagation::propagate_expm;

    fn split() -> (Liouvillian, Liouvillian) {
        let l1 = build_liouvillian(&sigma_x(), &[]).unwrap();
        let ch = LindbladChannel::new(ket_bra(2, 0, 1), 0.5).unwrap();
        let l2 = build_liouvillian(&sigma_z().mapv(|z| z * 0.3), &[ch]).unwrap();
        (l1, l2)
    }

    fn error(n: usize, correction: bool) -> f64 {
        let (l1, l2) = split();
        let full = l1.add_scaled(&l2, linalg::ONE).unwrap();
        let rho0 = DensityOperator::basis(2, 1);
        let exact = propagate_expm(&full, &rho0, 2.0).unwrap();
        let approx = trotter_propagate(&l1, &l2, &rho0, 2.0, n, correction).unwrap();
        linalg::frobenius_norm(&(approx.matrix() - exact.matrix()))
    }

    #[test]
    fn commuting_parts_are_exact() {
        let l1 = build_liouvillian(&sigma_z(), &[]).unwrap();
        let l2 = build_liouvillian(&linalg::zeros(2, 2), &[LindbladChannel::new(sigma_z(), 0.4).unwrap()]).unwrap();
        let full = l1.add_scaled(&l2, linalg::ONE).unwrap();
        let rho0 = DensityOperator::new(CMatrix::from_elem((2, 2), linalg::re(0.5))).unwrap();
        let exact = propagate_expm(&full, &rho0, 1.7).unwrap();
        for n in [1, 3, 10] {
            let approx = trotter_propagate(&l1, &l2, &rho0, 1.7, n, false).unwrap();
            assert!(linalg::max_abs_diff(approx.matrix(), exact.matrix()) < 1e-12);
        }
    }

    #[test]
    fn first_order_convergence() {
        for n in [50, 100, 200] {
            let ratio = error(n, false) / error(2 * n, false);
            assert!((1.8..=2.2).contains(&ratio), "ratio {ratio} at n = {n}");
        }
        assert!(error(1000, false) < error(50, false));
    }

    #[test]
    fn correction_improves_accuracy() {
        assert!(error(50, true) < error(50, false));
    }

    #[test]
    fn zero_steps_rejected() {
        let (l1, l2) = split();
        assert!(trotter_propagate(&l1, &l2, &DensityOperator::basis(2, 0), 1.0, 0, false).is_err());
    }
}
