//! Periodically driven closed systems.
//!
//! A Hamiltonian `H(t) = H₀ + e^{−iωt} H₊₁ + e^{iωt} H₋₁` is mapped onto a
//! time-independent Floquet Hamiltonian acting on `2N + 1` harmonic copies
//! of the system. Its eigenvalues, folded into the zone `(−ω/2, ω/2]`, are
//! the quasi-energies; the same quasi-energies follow from the eigenphases
//! of the one-period propagator.

use std::f64::consts::PI;

use ndarray::{s, Array1};

use crate::error::{QmeError, Result};
use crate::linalg::{self, CMatrix, CVector, C64, I};
use crate::redfield::eigenframe;

/// Maximum quasi-energy shift tolerated between truncations `N` and `N + 2`.
pub const TRUNCATION_TOL: f64 = 1e-6;
/// Maximum change of time-averaged probabilities tolerated between truncations.
pub const PROBABILITY_TOL: f64 = 1e-4;
/// First truncation order tried by [`converge_truncation`].
pub const START_HARMONICS: usize = 4;
/// Largest truncation order tried by [`converge_truncation`].
pub const MAX_HARMONICS: usize = 80;
/// Default number of steps per period for the propagator route.
pub const PERIOD_STEPS: usize = 10_000;

/// `(Δω/2)σ_z + Re[Ω]σ_x + Im[Ω]σ_y`, the drive Hamiltonian in the frame
/// rotating with the field under the rotating-wave approximation.
pub fn rwa_rotating_frame(delta_omega: f64, rabi: C64) -> CMatrix {
    ndarray::array![
        [C64::new(0.5 * delta_omega, 0.0), rabi.conj()],
        [rabi, C64::new(-0.5 * delta_omega, 0.0)]
    ]
}

/// Folds an energy into `(−ω/2, ω/2]`.
pub fn fold(energy: f64, omega: f64) -> f64 {
    let y = energy.rem_euclid(omega);
    if y > 0.5 * omega {
        y - omega
    } else {
        y
    }
}

/// Distance between two energies modulo `ω`.
pub fn periodic_distance(a: f64, b: f64, omega: f64) -> f64 {
    fold(a - b, omega).abs()
}

/// A Hamiltonian with a single drive harmonic, truncated at `n_harmonics`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloquetProblem {
    pub h0: CMatrix,
    /// Coefficient of `e^{−iωt}`.
    pub h_plus: CMatrix,
    /// Coefficient of `e^{iωt}`.
    pub h_minus: CMatrix,
    pub omega: f64,
    pub n_harmonics: usize,
}

impl FloquetProblem {
    pub fn new(h0: CMatrix, h_plus: CMatrix, h_minus: CMatrix, omega: f64, n_harmonics: usize) -> Result<Self> {
        let d = linalg::ensure_square(&h0)?;
        for (name, m) in [("h_plus", &h_plus), ("h_minus", &h_minus)] {
            if m.nrows() != d || m.ncols() != d {
                return Err(QmeError::DimensionMismatch(format!("{name} does not match h0 ({d}x{d})")));
            }
        }
        let herm = linalg::hermiticity_deviation(&h0);
        if herm > 1e-10 {
            return Err(QmeError::NonHermitianHamiltonian(herm));
        }
        let dev = linalg::frobenius_norm(&(&h_minus - &linalg::dagger(&h_plus)));
        if dev > 1e-10 {
            return Err(QmeError::NonHermitian(format!("h_minus differs from h_plus† by {dev:.3e}")));
        }
        if !(omega > 0.0) {
            return Err(QmeError::InvalidArgument(format!("drive frequency {omega} must be > 0")));
        }
        if n_harmonics == 0 {
            return Err(QmeError::InvalidArgument("at least one harmonic is required".into()));
        }
        Ok(Self {
            h0,
            h_plus,
            h_minus,
            omega,
            n_harmonics,
        })
    }

    /// `H(t) = H₀ + V cos(ωt + φ₀) A`, i.e. `H₊₁ = (V/2) e^{−iφ₀} A`.
    pub fn cosine_drive(h0: CMatrix, coupling: &CMatrix, amplitude: f64, phase: f64, omega: f64, n_harmonics: usize) -> Result<Self> {
        let c = C64::from_polar(0.5 * amplitude, -phase);
        let h_plus = coupling.mapv(|z| z * c);
        let h_minus = linalg::dagger(&h_plus);
        Self::new(h0, h_plus, h_minus, omega, n_harmonics)
    }

    /// A two-level system coupled to a cavity mode truncated at `n_max` photons:
    /// `H = H_S ⊗ I + ω I ⊗ a†a + V A ⊗ (a† e^{−iωt} + a e^{iωt})`.
    pub fn cavity(h_s: &CMatrix, coupling: &CMatrix, v: f64, omega: f64, n_max: usize, n_harmonics: usize) -> Result<Self> {
        let a = linalg::pauli::annihilation(n_max);
        let ad = linalg::dagger(&a);
        let id_f = linalg::identity(n_max + 1);
        let id_s = linalg::identity(h_s.nrows());
        let h0 = linalg::kron(h_s, &id_f) + linalg::kron(&id_s, &ad.dot(&a)).mapv(|z| z * omega);
        let h_plus = linalg::kron(coupling, &ad).mapv(|z| z * v);
        let h_minus = linalg::kron(coupling, &a).mapv(|z| z * v);
        Self::new(h0, h_plus, h_minus, omega, n_harmonics)
    }

    pub fn dim(&self) -> usize {
        self.h0.nrows()
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn with_harmonics(&self, n_harmonics: usize) -> Self {
        Self {
            n_harmonics,
            ..self.clone()
        }
    }

    /// The same problem expressed in the eigenbasis of `H₀` (ascending energies).
    pub fn in_eigenbasis(&self) -> Result<Self> {
        let frame = eigenframe(&self.h0)?;
        Ok(Self {
            h0: frame.to_eigenbasis(&self.h0),
            h_plus: frame.to_eigenbasis(&self.h_plus),
            h_minus: frame.to_eigenbasis(&self.h_minus),
            ..self.clone()
        })
    }

    /// `H(t)`
    pub fn hamiltonian_at(&self, t: f64) -> CMatrix {
        let e = C64::from_polar(1.0, -self.omega * t);
        &self.h0 + &self.h_plus.mapv(|z| z * e) + self.h_minus.mapv(|z| z * e.conj())
    }

    /// Index of harmonic block `n` (from `−N` to `N`) in the Floquet space.
    fn block(&self, n: i64) -> usize {
        (n + self.n_harmonics as i64) as usize
    }
}

/// Block-tridiagonal Floquet Hamiltonian: diagonal blocks `H₀ + nω`,
/// superdiagonal `H₊₁`, subdiagonal `H₋₁`, for `n = −N..N`.
pub fn build_floquet_hamiltonian(p: &FloquetProblem) -> CMatrix {
    let d = p.dim();
    let blocks = 2 * p.n_harmonics + 1;
    let mut hf = linalg::zeros(d * blocks, d * blocks);
    for k in 0..blocks {
        let n = k as f64 - p.n_harmonics as f64;
        let r = k * d;
        let mut diag = p.h0.clone();
        for i in 0..d {
            diag[[i, i]] += n * p.omega;
        }
        hf.slice_mut(s![r..r + d, r..r + d]).assign(&diag);
        if k + 1 < blocks {
            hf.slice_mut(s![r..r + d, r + d..r + 2 * d]).assign(&p.h_plus);
            hf.slice_mut(s![r + d..r + 2 * d, r..r + d]).assign(&p.h_minus);
        }
    }
    hf
}

/// Diagonalized Floquet Hamiltonian with one representative per quasi-energy class.
#[derive(Debug, Clone)]
pub struct FloquetSolution {
    /// Ascending quasi-energies in `(−ω/2, ω/2]`.
    pub quasi_energies: Vec<f64>,
    /// For each quasi-energy, its Fourier components `|α, n⟩` for `n = −N..N`.
    pub modes: Vec<Vec<CVector>>,
    /// All eigenvalues of the truncated Floquet Hamiltonian.
    pub eigenvalues: Vec<f64>,
    /// Matching eigenvectors as columns.
    pub eigenvectors: CMatrix,
    pub omega: f64,
    pub n_harmonics: usize,
}

fn diagonalize(p: &FloquetProblem) -> Result<FloquetSolution> {
    let d = p.dim();
    let blocks = 2 * p.n_harmonics + 1;
    let (eigenvalues, vectors) = linalg::eigh(&build_floquet_hamiltonian(p))?;
    let central = p.block(0) * d;

    // Rank eigenvectors by their weight in the central harmonic; the best
    // copy of each quasi-energy class carries most of that weight.
    let mut order: Vec<(usize, f64)> = (0..eigenvalues.len())
        .map(|k| {
            let w: f64 = (0..d).map(|i| vectors[[central + i, k]].norm_sqr()).sum();
            (k, w)
        })
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut chosen: Vec<usize> = Vec::with_capacity(d);
    for &(k, _) in &order {
        if chosen.len() == d {
            break;
        }
        let e = eigenvalues[k];
        let duplicate = chosen
            .iter()
            .any(|&j| periodic_distance(eigenvalues[j], e, p.omega) < 1e-6 * p.omega.max(1.0));
        if !duplicate {
            chosen.push(k);
        }
    }
    // Exactly degenerate quasi-energies: fill with the next heaviest vectors.
    for &(k, _) in &order {
        if chosen.len() == d {
            break;
        }
        if !chosen.contains(&k) {
            chosen.push(k);
        }
    }

    let mut classes: Vec<(f64, Vec<CVector>)> = chosen
        .iter()
        .map(|&k| {
            let comps = (0..blocks)
                .map(|b| Array1::from_shape_fn(d, |i| vectors[[b * d + i, k]]))
                .collect();
            (fold(eigenvalues[k], p.omega), comps)
        })
        .collect();
    classes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (quasi_energies, modes) = classes.into_iter().unzip();
    Ok(FloquetSolution {
        quasi_energies,
        modes,
        eigenvalues,
        eigenvectors: vectors,
        omega: p.omega,
        n_harmonics: p.n_harmonics,
    })
}

fn max_shift(a: &[f64], b: &[f64], omega: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| periodic_distance(*x, *y, omega))
        .fold(0.0, f64::max)
}

/// Quasi-energies from the Floquet Hamiltonian truncated at `p.n_harmonics`.
///
/// Fails with [`QmeError::TruncationNotConverged`] if going to `N + 2`
/// harmonics moves any quasi-energy by more than [`TRUNCATION_TOL`].
pub fn quasi_energies_hf(p: &FloquetProblem) -> Result<FloquetSolution> {
    let sol = diagonalize(p)?;
    let wider = diagonalize(&p.with_harmonics(p.n_harmonics + 2))?;
    let shift = max_shift(&sol.quasi_energies, &wider.quasi_energies, p.omega);
    if shift > TRUNCATION_TOL {
        return Err(QmeError::TruncationNotConverged {
            n: p.n_harmonics,
            shift,
        });
    }
    Ok(sol)
}

/// Increases the truncation from [`START_HARMONICS`] in steps of two until
/// quasi-energies move by less than [`TRUNCATION_TOL`] and time-averaged
/// probabilities by less than [`PROBABILITY_TOL`].
pub fn converge_truncation(p: &FloquetProblem) -> Result<FloquetProblem> {
    let mut n = START_HARMONICS;
    let mut prev = diagonalize(&p.with_harmonics(n))?;
    let mut prev_p = averaged_matrix(&prev);
    let mut last_shift = f64::INFINITY;
    while n + 2 <= MAX_HARMONICS {
        let next = diagonalize(&p.with_harmonics(n + 2))?;
        let next_p = averaged_matrix(&next);
        last_shift = max_shift(&prev.quasi_energies, &next.quasi_energies, p.omega);
        let dp = prev_p
            .iter()
            .zip(&next_p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if last_shift < TRUNCATION_TOL && dp < PROBABILITY_TOL {
            return Ok(p.with_harmonics(n));
        }
        n += 2;
        prev = next;
        prev_p = next_p;
    }
    Err(QmeError::TruncationNotConverged { n, shift: last_shift })
}

fn averaged_matrix(sol: &FloquetSolution) -> Vec<f64> {
    let d = sol.modes.first().map(|m| m[0].len()).unwrap_or(0);
    let mut out = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in 0..d {
            out.push(averaged_from(sol, d, a, b));
        }
    }
    out
}

/// One-period propagator `U(T; 0)` from fourth-order Magnus steps.
pub fn period_propagator(p: &FloquetProblem, steps: usize) -> CMatrix {
    let d = p.dim();
    let h = p.period() / steps as f64;
    let c1 = 0.5 - 3f64.sqrt() / 6.0;
    let c2 = 0.5 + 3f64.sqrt() / 6.0;
    let mut u = linalg::identity(d);
    for k in 0..steps {
        let t = k as f64 * h;
        let a1 = p.hamiltonian_at(t + c1 * h).mapv(|z| -I * z);
        let a2 = p.hamiltonian_at(t + c2 * h).mapv(|z| -I * z);
        let omega = (&a1 + &a2).mapv(|z| z * (0.5 * h)) + linalg::commutator(&a2, &a1).mapv(|z| z * (3f64.sqrt() * h * h / 12.0));
        u = linalg::expm(&omega).dot(&u);
    }
    u
}

/// Quasi-energies `ε = −arg(η)/T` from the eigenvalues `η` of the one-period
/// propagator, folded and sorted.
pub fn quasi_energies_propagator(p: &FloquetProblem) -> Result<Vec<f64>> {
    quasi_energies_propagator_steps(p, PERIOD_STEPS)
}

/// [`quasi_energies_propagator`] with an explicit number of steps per period.
pub fn quasi_energies_propagator_steps(p: &FloquetProblem, steps: usize) -> Result<Vec<f64>> {
    let u = period_propagator(p, steps.max(1));
    let dev = linalg::frobenius_norm(&(linalg::dagger(&u).dot(&u) - linalg::identity(p.dim())));
    if dev > 1e-8 {
        return Err(QmeError::NonUnitaryPropagator(dev));
    }
    let period = p.period();
    let mut eps: Vec<f64> = linalg::eigenvalues(&u)?
        .into_iter()
        .map(|eta| fold(-eta.arg() / period, p.omega))
        .collect();
    eps.sort_by(f64::total_cmp);
    Ok(eps)
}

fn check_indices(p: &FloquetProblem, alpha: usize, beta: usize) -> Result<()> {
    let d = p.dim();
    if alpha >= d || beta >= d {
        return Err(QmeError::InvalidArgument(format!("state indices ({alpha}, {beta}) out of range for dimension {d}")));
    }
    Ok(())
}

/// `P_{α→β}(t) = Σ_k |⟨β k| e^{−iH_F t} |α 0⟩|²`, summing over every
/// retained harmonic block.
pub fn transition_probability(p: &FloquetProblem, alpha: usize, beta: usize, t: f64) -> Result<f64> {
    check_indices(p, alpha, beta)?;
    let sol = quasi_energies_hf(p)?;
    Ok(probability_from(&sol, p, alpha, beta, t))
}

/// [`transition_probability`] at several times, sharing one diagonalization.
pub fn transition_probabilities(p: &FloquetProblem, alpha: usize, beta: usize, times: &[f64]) -> Result<Vec<f64>> {
    check_indices(p, alpha, beta)?;
    let sol = quasi_energies_hf(p)?;
    Ok(times.iter().map(|&t| probability_from(&sol, p, alpha, beta, t)).collect())
}

fn probability_from(sol: &FloquetSolution, p: &FloquetProblem, alpha: usize, beta: usize, t: f64) -> f64 {
    let d = p.dim();
    let v = &sol.eigenvectors;
    let start = p.block(0) * d + alpha;
    // e^{−iH_F t}|α0⟩ = Σ_λ |λ⟩ e^{−iλt} ⟨λ|α0⟩
    let weights: Vec<C64> = sol
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &lam)| C64::from_polar(1.0, -lam * t) * v[[start, k]].conj())
        .collect();
    let blocks = 2 * p.n_harmonics + 1;
    (0..blocks)
        .map(|b| {
            let row = b * d + beta;
            let amp: C64 = weights.iter().enumerate().map(|(k, w)| v[[row, k]] * w).sum();
            amp.norm_sqr()
        })
        .sum()
}

/// `P̄_{α→β} = Σ_k Σ_λ |⟨β k|λ⟩⟨λ|α 0⟩|²`
pub fn time_averaged_probability(p: &FloquetProblem, alpha: usize, beta: usize) -> Result<f64> {
    check_indices(p, alpha, beta)?;
    let sol = quasi_energies_hf(p)?;
    Ok(averaged_from(&sol, p.dim(), alpha, beta))
}

fn averaged_from(sol: &FloquetSolution, d: usize, alpha: usize, beta: usize) -> f64 {
    let v = &sol.eigenvectors;
    let blocks = 2 * sol.n_harmonics + 1;
    let start = sol.n_harmonics * d + alpha;
    (0..sol.eigenvalues.len())
        .map(|k| {
            let overlap = v[[start, k]].norm_sqr();
            let spread: f64 = (0..blocks).map(|b| v[[b * d + beta, k]].norm_sqr()).sum();
            overlap * spread
        })
        .sum()
}
