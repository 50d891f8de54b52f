//! Two-time correlation functions from the quantum regression theorem and
//! the spectra obtained by Fourier transforming them.
//!
//! `⟨A(τ)B(0)⟩ = Tr[A Λ_τ(B ρ)]`: the operator `Bρ` is propagated with the
//! same generator as a density operator, even though it is neither Hermitian
//! nor of unit trace.

use log::warn;
use rayon::prelude::*;

use crate::error::{QmeError, Result};
use crate::linalg::{self, CMatrix, C64, I};
use crate::liouville::{devectorize, unique_steady_state, vectorize, Liouvillian};
use crate::operators::DensityOperator;
use crate::propagation::{propagate_expm, propagator, semigroup_propagate, TimeGrid};

/// Relative spacing error accepted for a "uniform" τ grid.
const SPACING_TOL: f64 = 1e-9;
/// Decay of `|c(τ_max)| / |c(0)|` below which a series counts as converged.
pub const DECAY_TOL: f64 = 1e-4;
/// Length of the default τ grid in units of the inverse spectral gap.
pub const GAP_MULTIPLE: f64 = 20.0;

/// Samples of `⟨A(τ)B(0)⟩` on a uniform τ grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    taus: Vec<f64>,
    values: Vec<C64>,
}

impl CorrelationSeries {
    pub fn new(taus: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        if taus.len() != values.len() {
            return Err(QmeError::DimensionMismatch(format!("{} taus for {} values", taus.len(), values.len())));
        }
        if taus.len() < 2 {
            return Err(QmeError::InvalidArgument("a correlation series needs at least two samples".into()));
        }
        let dt = taus[1] - taus[0];
        if !(dt > 0.0) {
            return Err(QmeError::InvalidArgument("τ grid must be increasing".into()));
        }
        for (k, w) in taus.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > SPACING_TOL * dt + 4.0 * f64::EPSILON * w[1].abs() {
                return Err(QmeError::InvalidArgument(format!("τ grid is not uniform at index {}", k + 1)));
            }
        }
        Ok(Self { taus, values })
    }

    /// Samples `f(τ)` on a grid.
    pub fn from_fn(grid: &TimeGrid, f: impl Fn(f64) -> C64) -> Result<Self> {
        let taus = grid.times();
        let values = taus.iter().map(|&t| f(t)).collect();
        Self::new(taus, values)
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn dtau(&self) -> f64 {
        self.taus[1] - self.taus[0]
    }

    /// `|c(τ_max)| < DECAY_TOL · |c(0)|`
    pub fn has_decayed(&self) -> bool {
        let first = self.values[0].norm();
        let last = self.values[self.values.len() - 1].norm();
        last <= DECAY_TOL * first
    }

    /// Trapezoid-weighted `Σ_j w_j c(τ_j) e^{s·iωτ_j} Δτ`.
    fn one_sided(&self, omega: f64, sign: f64) -> C64 {
        let n = self.values.len();
        let dt = self.dtau();
        let sum: C64 = self
            .taus
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(j, (&t, &c))| {
                let w = if j == 0 || j + 1 == n { 0.5 } else { 1.0 };
                c * C64::from_polar(w, sign * omega * t)
            })
            .sum();
        sum * dt
    }
}

/// Real intensity samples on a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub omegas: Vec<f64>,
    pub values: Vec<f64>,
}

impl Spectrum {
    pub fn zeros(omegas: &[f64]) -> Self {
        Self {
            omegas: omegas.to_vec(),
            values: vec![0.0; omegas.len()],
        }
    }

    /// Index of the largest sample.
    pub fn peak_index(&self) -> Option<usize> {
        (0..self.values.len()).max_by(|&a, &b| self.values[a].total_cmp(&self.values[b]))
    }

    /// Frequency of the largest sample.
    pub fn peak(&self) -> Option<f64> {
        self.peak_index().map(|k| self.omegas[k])
    }

    /// Full width at half maximum of the highest peak, with the half-maximum
    /// crossings located by linear interpolation.
    pub fn fwhm(&self) -> Option<f64> {
        let k = self.peak_index()?;
        let half = 0.5 * self.values[k];
        let crossing = |range: &mut dyn Iterator<Item = usize>, step: isize| -> Option<f64> {
            for j in range {
                let i = (j as isize + step) as usize;
                if self.values[i] <= half {
                    let (x0, y0) = (self.omegas[j], self.values[j]);
                    let (x1, y1) = (self.omegas[i], self.values[i]);
                    return Some(x0 + (half - y0) * (x1 - x0) / (y1 - y0));
                }
            }
            None
        };
        let right = crossing(&mut (k..self.values.len() - 1), 1)?;
        let left = crossing(&mut (1..=k).rev(), -1)?;
        Some(right - left)
    }

    /// Indices of strict local maxima, excluding the endpoints.
    pub fn local_maxima(&self) -> Vec<usize> {
        local_maxima(&self.values)
    }

    fn add(&mut self, other: &Spectrum) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }
}

/// Indices `k` with `v[k−1] < v[k] ≥ v[k+1]`.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&k| values[k] > values[k - 1] && values[k] >= values[k + 1])
        .collect()
}

fn check_operator(l: &Liouvillian, op: &CMatrix, name: &str) -> Result<()> {
    if op.nrows() != l.dim() || op.ncols() != l.dim() {
        return Err(QmeError::DimensionMismatch(format!(
            "operator {name} is {}x{}, generator acts on dimension {}",
            op.nrows(),
            op.ncols(),
            l.dim()
        )));
    }
    Ok(())
}

/// `c(τ) = Tr[A Λ_τ(X)]` for an arbitrary operator `X`.
fn regression(l: &Liouvillian, seed: CMatrix, a: &CMatrix, taus: &TimeGrid) -> Result<CorrelationSeries> {
    let start = if taus.t0 > 0.0 {
        let v = propagator(l, taus.t0).dot(&vectorize(&seed));
        devectorize(&v, l.dim())?
    } else {
        seed
    };
    let traj = semigroup_propagate(l, &DensityOperator::from_matrix_unchecked(start), taus)?;
    let values = traj.states.iter().map(|s| linalg::trace(&a.dot(s.matrix()))).collect();
    CorrelationSeries::new(traj.times, values)
}

/// `⟨A(t+τ)B(t)⟩ = Tr[A Λ_τ(B ρ(t))]` with `ρ(t) = Λ_t(ρ_init)`.
pub fn two_time_correlation(
    l: &Liouvillian,
    rho_init: &DensityOperator,
    a: &CMatrix,
    b: &CMatrix,
    t: f64,
    taus: &TimeGrid,
) -> Result<CorrelationSeries> {
    check_operator(l, a, "A")?;
    check_operator(l, b, "B")?;
    let rho_t = propagate_expm(l, rho_init, t)?;
    regression(l, b.dot(rho_t.matrix()), a, taus)
}

/// `⟨A(τ)B(0)⟩` in the unique steady state.
pub fn steady_correlation(l: &Liouvillian, a: &CMatrix, b: &CMatrix, taus: &TimeGrid) -> Result<CorrelationSeries> {
    check_operator(l, a, "A")?;
    check_operator(l, b, "B")?;
    let rho = unique_steady_state(l)?;
    regression(l, b.dot(rho.matrix()), a, taus)
}

/// `⟨B(0)A(τ)⟩ = Tr[A Λ_τ(ρ B)]` in the unique steady state.
pub fn steady_correlation_reversed(l: &Liouvillian, a: &CMatrix, b: &CMatrix, taus: &TimeGrid) -> Result<CorrelationSeries> {
    check_operator(l, a, "A")?;
    check_operator(l, b, "B")?;
    let rho = unique_steady_state(l)?;
    regression(l, rho.matrix().dot(b), a, taus)
}

/// Smallest decay rate `min |Re λ|` over the non-stationary modes of `L`.
pub fn spectral_gap(l: &Liouvillian) -> Result<f64> {
    let ev = linalg::eigenvalues(l.matrix())?;
    let scale = linalg::one_norm(l.matrix()).max(1.0);
    ev.iter()
        .filter(|z| z.norm() > 1e-9 * scale)
        .map(|z| z.re.abs())
        .min_by(f64::total_cmp)
        .ok_or_else(|| QmeError::InvalidArgument("generator has no decaying modes".into()))
}

/// Uniform τ grid spanning `GAP_MULTIPLE / gap`, fine enough to sample the
/// fastest oscillation of `L` about thirty times per period.
pub fn default_tau_grid(l: &Liouvillian) -> Result<TimeGrid> {
    let gap = spectral_gap(l)?;
    if !(gap > 1e-12) {
        return Err(QmeError::InvalidArgument(format!("spectral gap {gap:.3e} too small for a finite τ grid")));
    }
    let span = GAP_MULTIPLE / gap;
    let fastest = linalg::eigenvalues(l.matrix())?.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let steps = ((span * fastest / 0.2).ceil() as usize).clamp(2000, 200_000);
    TimeGrid::span(span, steps)
}

/// `E(ω) = 2 Re Σ_j w_j c(τ_j) e^{−iωτ_j} Δτ` with trapezoid weights.
pub fn emission_spectrum(series: &CorrelationSeries, omegas: &[f64]) -> Spectrum {
    if !series.has_decayed() {
        warn!(
            "correlation has not decayed by τ = {}: |c(τ_max)/c(0)| above {DECAY_TOL:e}",
            series.taus[series.len() - 1]
        );
    }
    let values = omegas.par_iter().map(|&w| 2.0 * series.one_sided(w, -1.0).re).collect();
    Spectrum {
        omegas: omegas.to_vec(),
        values,
    }
}

/// `A(ν) = Re ∫₀^∞ dτ e^{iντ} ⟨[σ₊†(τ), σ₊(0)]⟩` on the default τ grid.
///
/// The commutator is split into `⟨σ₊†(τ)σ₊(0)⟩ − ⟨σ₊(0)σ₊†(τ)⟩`, both
/// obtained from the steady state by quantum regression.
pub fn absorption_spectrum(l: &Liouvillian, sigma_plus: &CMatrix, nus: &[f64]) -> Result<Spectrum> {
    absorption_spectrum_on(l, sigma_plus, nus, &default_tau_grid(l)?)
}

/// [`absorption_spectrum`] with an explicit τ grid.
pub fn absorption_spectrum_on(l: &Liouvillian, sigma_plus: &CMatrix, nus: &[f64], taus: &TimeGrid) -> Result<Spectrum> {
    let lowering = linalg::dagger(sigma_plus);
    let forward = steady_correlation(l, &lowering, sigma_plus, taus)?;
    let backward = steady_correlation_reversed(l, &lowering, sigma_plus, taus)?;
    let values: Vec<C64> = forward.values.iter().zip(&backward.values).map(|(f, b)| f - b).collect();
    let series = CorrelationSeries::new(forward.taus, values)?;
    let values = nus.par_iter().map(|&nu| series.one_sided(nu, 1.0).re).collect();
    Ok(Spectrum {
        omegas: nus.to_vec(),
        values,
    })
}

/// `E(ω) = Σ_{i>j} F[⟨J_ij†(τ) J_ij(0)⟩]` with `J_ij = √γ_ij σ_ij`.
pub fn multilevel_emission(l: &Liouvillian, jumps: &[(CMatrix, f64)], taus: &TimeGrid, omegas: &[f64]) -> Result<Spectrum> {
    let mut total = Spectrum::zeros(omegas);
    for (k, (op, rate)) in jumps.iter().enumerate() {
        if !(*rate >= 0.0) || !rate.is_finite() {
            return Err(QmeError::InvalidArgument(format!("transition {k} has invalid rate {rate}")));
        }
        let j = op.mapv(|z| z * rate.sqrt());
        let series = steady_correlation(l, &linalg::dagger(&j), &j, taus)?;
        total.add(&emission_spectrum(&series, omegas));
    }
    Ok(total)
}

/// `e^{−γτ} e^{−iω₀τ}`, useful as a reference correlation.
pub fn damped_oscillation(gamma: f64, omega0: f64) -> impl Fn(f64) -> C64 {
    move |t| (-(gamma + I * omega0) * t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pauli::*;
    use crate::linalg::re;
    use crate::liouville::{build_liouvillian, LindbladChannel};

    fn emitter(omega: f64, gamma: f64, pump: f64) -> Liouvillian {
        let h = sigma_z().mapv(|z| z * (-0.5 * omega));
        let mut ch = vec![LindbladChannel::new(ket_bra(2, 0, 1), gamma).unwrap()];
        if pump > 0.0 {
            ch.push(LindbladChannel::new(ket_bra(2, 1, 0), pump).unwrap());
        }
        build_liouvillian(&h, &ch).unwrap()
    }

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn identity_observable_gives_constant_trace() {
        let l = emitter(1.0, 0.2, 0.05);
        let rho = DensityOperator::basis(2, 1);
        let b = sigma_x();
        let taus = TimeGrid::new(0.0, 0.1, 50).unwrap();
        let c = two_time_correlation(&l, &rho, &linalg::identity(2), &b, 0.7, &taus).unwrap();
        let rho_t = propagate_expm(&l, &rho, 0.7).unwrap();
        let expected = linalg::trace(&b.dot(rho_t.matrix()));
        for v in c.values() {
            assert!((v - expected).norm() < 1e-12);
        }
        let ab = two_time_correlation(&l, &rho, &sigma_y(), &b, 0.7, &taus).unwrap();
        let direct = linalg::trace(&sigma_y().dot(&b).dot(rho_t.matrix()));
        assert!((ab.values()[0] - direct).norm() < 1e-12);
    }

    #[test]
    fn closed_system_heisenberg() {
        let omega = 1.7;
        let l = build_liouvillian(&sigma_z().mapv(|z| z * (0.5 * omega)), &[]).unwrap();
        let rho = DensityOperator::basis(2, 0);
        let taus = TimeGrid::new(0.0, 0.05, 200).unwrap();
        let c = two_time_correlation(&l, &rho, &sigma_x(), &sigma_x(), 0.0, &taus).unwrap();
        // σ_x(τ) = cos(Ωτ)σ_x − sin(Ωτ)σ_y, and ⟨0|σ_yσ_x|0⟩ = −i
        for (t, v) in c.taus().iter().zip(c.values()) {
            let expected = C64::new((omega * t).cos(), (omega * t).sin());
            assert!((v - expected).norm() < 1e-8, "{t}: {v} vs {expected}");
        }
    }

    #[test]
    fn long_time_factorization() {
        let l = emitter(1.0, 0.4, 0.1);
        let taus = TimeGrid::new(0.0, 0.5, 400).unwrap();
        let (a, b) = (sigma_z(), sigma_x().mapv(|z| z + re(0.3)));
        let c = steady_correlation(&l, &a, &b, &taus).unwrap();
        let ss = unique_steady_state(&l).unwrap();
        let expected = linalg::trace(&a.dot(ss.matrix())) * linalg::trace(&b.dot(ss.matrix()));
        assert!((c.values()[c.len() - 1] - expected).norm() < 1e-6);
        let zero = steady_correlation(&l, &a, &linalg::zeros(2, 2), &taus).unwrap();
        assert!(zero.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn non_unique_steady_state_is_rejected() {
        let l = build_liouvillian(&sigma_z(), &[]).unwrap();
        let taus = TimeGrid::new(0.0, 0.1, 3).unwrap();
        assert!(matches!(
            steady_correlation(&l, &sigma_x(), &sigma_x(), &taus),
            Err(QmeError::NonUniqueSteadyState(_))
        ));
    }

    #[test]
    fn lorentzian_transform() {
        let (gamma, w0) = (0.1, 2.0);
        let taus = TimeGrid::span(20.0 / gamma, 20_000).unwrap();
        let series = CorrelationSeries::from_fn(&taus, damped_oscillation(gamma, w0)).unwrap();
        let omegas = grid(-4.0, 0.0, 2001);
        let s = emission_spectrum(&series, &omegas);
        let step = omegas[1] - omegas[0];
        assert!((s.peak().unwrap() + w0).abs() <= step);
        assert!((s.fwhm().unwrap() - 2.0 * gamma).abs() <= step);
        for (w, v) in s.omegas.iter().zip(&s.values) {
            let exact = 2.0 * gamma / (gamma * gamma + (w + w0).powi(2));
            assert!((v - exact).abs() < 1e-3 * exact.max(1.0));
        }
    }

    #[test]
    fn zero_series_gives_zero_spectrum() {
        let taus = TimeGrid::span(1.0, 10).unwrap();
        let series = CorrelationSeries::from_fn(&taus, |_| re(0.0)).unwrap();
        assert!(emission_spectrum(&series, &[-1.0, 0.0, 2.0]).values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn real_even_correlation_gives_symmetric_spectrum() {
        let taus = TimeGrid::span(60.0, 6000).unwrap();
        let series = CorrelationSeries::from_fn(&taus, |t| re((-0.3 * t).exp() * (1.1 * t).cos())).unwrap();
        let omegas = grid(-3.0, 3.0, 121);
        let s = emission_spectrum(&series, &omegas);
        for k in 0..omegas.len() {
            assert!((s.values[k] - s.values[omegas.len() - 1 - k]).abs() < 1e-8);
        }
    }

    #[test]
    fn absorption_peaks_at_bare_transition() {
        let (w0, gamma) = (1.5, 0.2);
        let l = emitter(w0, gamma, 0.0);
        let nus = grid(0.5, 2.5, 401);
        let s = absorption_spectrum(&l, &ket_bra(2, 1, 0), &nus).unwrap();
        let step = nus[1] - nus[0];
        assert!((s.peak().unwrap() - w0).abs() <= step);
        // Lorentzian of half-width γ/2 in amplitude
        assert!((s.fwhm().unwrap() - gamma).abs() <= 2.0 * step);
        let zero = absorption_spectrum(&l, &linalg::zeros(2, 2), &nus).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn emission_conjugate_symmetry() {
        let l = emitter(1.0, 0.3, 0.1);
        let taus = TimeGrid::new(0.0, 0.05, 400).unwrap();
        let (a, b) = (ket_bra(2, 1, 0), ket_bra(2, 0, 1));
        let fwd = steady_correlation(&l, &a, &b, &taus).unwrap();
        // ⟨A(−τ)B(0)⟩ = ⟨A(0)B(τ)⟩ = Tr[B Λ_τ(ρA)]
        let back = steady_correlation_reversed(&l, &b, &a, &taus).unwrap();
        for (f, g) in fwd.values().iter().zip(back.values()) {
            assert!((f.conj() - g).norm() < 1e-12);
        }
    }

    #[test]
    fn single_transition_matches_emission() {
        let l = emitter(1.0, 0.3, 0.1);
        let taus = default_tau_grid(&l).unwrap();
        let omegas = grid(-2.0, 2.0, 81);
        let jump = ket_bra(2, 0, 1);
        let multi = multilevel_emission(&l, &[(jump.clone(), 0.3)], &taus, &omegas).unwrap();
        let j = jump.mapv(|z| z * 0.3f64.sqrt());
        let series = steady_correlation(&l, &linalg::dagger(&j), &j, &taus).unwrap();
        let single = emission_spectrum(&series, &omegas);
        for (a, b) in multi.values.iter().zip(&single.values) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn ladder_has_two_lines() {
        // |0⟩ < |1⟩ < |2⟩ with spacings 1.0 and 1.6, incoherently pumped to the top.
        let h = linalg::diag(&[re(0.0), re(1.0), re(2.6)]);
        let ch = [
            LindbladChannel::new(ket_bra(3, 0, 1), 0.1).unwrap(),
            LindbladChannel::new(ket_bra(3, 1, 2), 0.1).unwrap(),
            LindbladChannel::new(ket_bra(3, 2, 0), 0.05).unwrap(),
        ];
        let l = build_liouvillian(&h, &ch).unwrap();
        let taus = default_tau_grid(&l).unwrap();
        let omegas = grid(0.0, 2.5, 251);
        let jumps = [(ket_bra(3, 0, 1), 0.1), (ket_bra(3, 1, 2), 0.1)];
        let s = multilevel_emission(&l, &jumps, &taus, &omegas).unwrap();
        let step = omegas[1] - omegas[0];
        let peaks: Vec<f64> = s.local_maxima().iter().map(|&k| s.omegas[k]).collect();
        assert_eq!(peaks.len(), 2, "{peaks:?}");
        assert!((peaks[0] - 1.0).abs() <= step && (peaks[1] - 1.6).abs() <= step);
        assert!(s.values.iter().all(|&v| v >= -1e-6));
    }

    #[test]
    fn gap_and_default_grid() {
        let l = emitter(1.0, 0.4, 0.0);
        let gap = spectral_gap(&l).unwrap();
        assert!((gap - 0.2).abs() < 1e-10);
        let g = default_tau_grid(&l).unwrap();
        assert!((g.t_end() - 100.0).abs() < 1e-9);
        let closed = build_liouvillian(&sigma_z(), &[]).unwrap();
        assert!(default_tau_grid(&closed).is_err());
    }

    #[test]
    fn non_uniform_grid_rejected() {
        assert!(CorrelationSeries::new(vec![0.0, 1.0, 2.5], vec![re(1.0); 3]).is_err());
        assert!(CorrelationSeries::new(vec![0.0, 1.0], vec![re(1.0); 3]).is_err());
    }
}
