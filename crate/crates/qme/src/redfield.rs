//! Bloch-Redfield theory for weakly coupled system-bath models.
//!
//! Everything here works in the eigenbasis of the system Hamiltonian. The
//! coupling operators `A_α` are taken to be mutually uncorrelated, so only
//! the auto-spectra `S_αα(ω)` enter.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;

use crate::error::{QmeError, Result};
use crate::linalg::{self, CMatrix, C64, ZERO};
use crate::liouville::{LindbladChannel, Liouvillian};

/// Below this `|βω|` the Ohmic spectrum switches to its `ω → 0` limit.
const OHMIC_SMALL_ARG: f64 = 1e-8;
/// Bohr frequencies closer than this are treated as equal.
pub const BOHR_MERGE_TOL: f64 = 1e-9;
/// Minimum level spacing required by the Pauli reduction.
pub const MIN_LEVEL_SPACING: f64 = 1e-9;

/// `S(ω) = 2πηω e^{−|ω|/ω_c} / (1 − e^{−βω})`, with `S(0) = 2πη/β`.
///
/// Positive frequencies describe energy given to the bath, so for `β > 0`
/// emission outweighs absorption: `S(−ω)/S(ω) = e^{−βω}`.
pub fn ohmic_spectrum(eta: f64, omega_c: f64, beta: f64, omega: f64) -> f64 {
    if eta == 0.0 {
        return 0.0;
    }
    let cutoff = (-omega.abs() / omega_c).exp();
    let x = beta * omega;
    if x.abs() < OHMIC_SMALL_ARG {
        return 2.0 * PI * eta * cutoff / beta;
    }
    // ω / (1 − e^{−βω}) written with expm1 to keep precision near zero.
    2.0 * PI * eta * cutoff * omega / -(-x).exp_m1()
}

/// Noise-power spectrum of a bath coupling operator.
#[derive(Clone)]
pub enum NoiseSpectrum {
    Ohmic { eta: f64, omega_c: f64, beta: f64 },
    /// Samples `(ω, S)` sorted by `ω`, linearly interpolated and zero outside the range.
    Tabulated(Vec<(f64, f64)>),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for NoiseSpectrum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Ohmic { eta, omega_c, beta } => f
                .debug_struct("Ohmic")
                .field("eta", eta)
                .field("omega_c", omega_c)
                .field("beta", beta)
                .finish(),
            Self::Tabulated(points) => f.debug_tuple("Tabulated").field(&points.len()).finish(),
            Self::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl NoiseSpectrum {
    pub fn ohmic(eta: f64, omega_c: f64, beta: f64) -> Result<Self> {
        if !(eta >= 0.0) {
            return Err(QmeError::InvalidArgument(format!("eta = {eta} must be >= 0")));
        }
        if !(omega_c > 0.0) {
            return Err(QmeError::InvalidArgument(format!("omega_c = {omega_c} must be > 0")));
        }
        if !(beta > 0.0) {
            return Err(QmeError::InvalidArgument(format!("beta = {beta} must be > 0")));
        }
        Ok(Self::Ohmic { eta, omega_c, beta })
    }

    pub fn tabulated(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(QmeError::InvalidArgument("tabulated spectrum needs samples".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self::Tabulated(points))
    }

    pub fn evaluate(&self, omega: f64) -> f64 {
        match self {
            Self::Ohmic { eta, omega_c, beta } => ohmic_spectrum(*eta, *omega_c, *beta, omega),
            Self::Tabulated(points) => interpolate(points, omega),
            Self::Custom(f) => f(omega),
        }
    }
}

fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if x < first.0 || x > last.0 {
        return 0.0;
    }
    let idx = points.partition_point(|p| p.0 <= x);
    if idx == 0 {
        return first.1;
    }
    if idx == points.len() {
        return last.1;
    }
    let (x0, y0) = points[idx - 1];
    let (x1, y1) = points[idx];
    if x1 == x0 {
        return y0;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// A Hermitian system operator coupled to a bath with spectrum `S(ω)`.
#[derive(Debug, Clone)]
pub struct CouplingSpec {
    pub operator: CMatrix,
    pub spectrum: NoiseSpectrum,
}

impl CouplingSpec {
    pub fn new(operator: CMatrix, spectrum: NoiseSpectrum) -> Result<Self> {
        linalg::ensure_square(&operator)?;
        let dev = linalg::hermiticity_deviation(&operator);
        if dev > 1e-10 {
            return Err(QmeError::NonHermitian(format!("coupling operator deviates by {dev:.3e}")));
        }
        Ok(Self { operator, spectrum })
    }
}

/// Eigenbasis of a Hermitian Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenFrame {
    /// Ascending energies `ω_a`.
    pub energies: Vec<f64>,
    /// Eigenvectors as columns.
    pub vectors: CMatrix,
    /// `ω_ab = ω_a − ω_b`.
    pub bohr_frequencies: Array2<f64>,
}

impl EigenFrame {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// `U† X U`
    pub fn to_eigenbasis(&self, op: &CMatrix) -> CMatrix {
        linalg::dagger(&self.vectors).dot(op).dot(&self.vectors)
    }

    /// `U X U†`
    pub fn from_eigenbasis(&self, op: &CMatrix) -> CMatrix {
        self.vectors.dot(op).dot(&linalg::dagger(&self.vectors))
    }

    /// Smallest gap between consecutive energies.
    pub fn min_spacing(&self) -> f64 {
        self.energies.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}

/// Diagonalizes `h`. Each eigenvector is rephased so that its
/// largest-magnitude component is real and positive.
pub fn eigenframe(h: &CMatrix) -> Result<EigenFrame> {
    let d = linalg::ensure_square(h)?;
    let dev = linalg::hermiticity_deviation(h);
    if dev > 1e-10 {
        return Err(QmeError::NonHermitian(format!("Hamiltonian deviates by {dev:.3e}")));
    }
    let (energies, mut vectors) = linalg::eigh(h)?;
    for k in 0..d {
        let mut best = 0;
        let mut best_mag = -1.0;
        for i in 0..d {
            let m = vectors[[i, k]].norm();
            // Ties go to the first index so the choice is reproducible.
            if m > best_mag + 1e-12 {
                best = i;
                best_mag = m;
            }
        }
        let pivot = vectors[[best, k]];
        if pivot.norm() > 0.0 {
            let phase = pivot.conj() / pivot.norm();
            vectors.column_mut(k).mapv_inplace(|z| z * phase);
            vectors[[best, k]] = C64::new(vectors[[best, k]].norm(), 0.0);
        }
    }
    let bohr_frequencies = Array2::from_shape_fn((d, d), |(a, b)| energies[a] - energies[b]);
    Ok(EigenFrame {
        energies,
        vectors,
        bohr_frequencies,
    })
}

fn check_couplings(d: usize, couplings: &[CouplingSpec]) -> Result<()> {
    for (k, c) in couplings.iter().enumerate() {
        if c.operator.nrows() != d {
            return Err(QmeError::DimensionMismatch(format!(
                "coupling {k} has dimension {}, Hamiltonian has {d}",
                c.operator.nrows()
            )));
        }
        let dev = linalg::hermiticity_deviation(&c.operator);
        if dev > 1e-10 {
            return Err(QmeError::NonHermitian(format!("coupling {k} deviates by {dev:.3e}")));
        }
    }
    Ok(())
}

/// Bloch-Redfield generator in the eigenbasis of `h`, acting on
/// column-stacked density vectors.
///
/// With `include_unitary` the coherent part `−iω_ab ρ_ab` is added. With a
/// `secular_cutoff`, tensor elements whose Bohr frequencies differ by more
/// than the cutoff, `|ω_ab − ω_cd| > cutoff`, are dropped.
pub fn bloch_redfield_tensor(
    h: &CMatrix,
    couplings: &[CouplingSpec],
    include_unitary: bool,
    secular_cutoff: Option<f64>,
) -> Result<Liouvillian> {
    let frame = eigenframe(h)?;
    check_couplings(frame.dim(), couplings)?;
    Ok(redfield_in_frame(&frame, couplings, include_unitary, secular_cutoff))
}

/// [`bloch_redfield_tensor`] for an already diagonalized Hamiltonian.
pub fn redfield_in_frame(
    frame: &EigenFrame,
    couplings: &[CouplingSpec],
    include_unitary: bool,
    secular_cutoff: Option<f64>,
) -> Liouvillian {
    let d = frame.dim();
    let w = &frame.bohr_frequencies;
    let mut g = linalg::zeros(d * d, d * d);

    for coupling in couplings {
        let a = frame.to_eigenbasis(&coupling.operator);
        let s = Array2::from_shape_fn((d, d), |(i, j)| coupling.spectrum.evaluate(w[[i, j]]));
        // Contracted terms: Σ_n A_an A_nc S(ω_cn) and Σ_n A_dn A_nb S(ω_dn).
        let left = CMatrix::from_shape_fn((d, d), |(i, k)| (0..d).map(|n| a[[i, n]] * a[[n, k]] * s[[k, n]]).sum());
        let right = CMatrix::from_shape_fn((d, d), |(i, k)| (0..d).map(|n| a[[i, n]] * a[[n, k]] * s[[i, n]]).sum());
        for ia in 0..d {
            for ib in 0..d {
                let row = ib * d + ia;
                for ic in 0..d {
                    for id in 0..d {
                        if let Some(cut) = secular_cutoff {
                            if (w[[ia, ib]] - w[[ic, id]]).abs() > cut {
                                continue;
                            }
                        }
                        let mut acc = ZERO;
                        if ib == id {
                            acc += left[[ia, ic]];
                        }
                        if ia == ic {
                            acc += right[[id, ib]];
                        }
                        let cross = a[[ia, ic]] * a[[id, ib]];
                        acc -= cross * (s[[ic, ia]] + s[[id, ib]]);
                        g[[row, id * d + ic]] += acc * -0.5;
                    }
                }
            }
        }
    }
    if include_unitary {
        for ia in 0..d {
            for ib in 0..d {
                let k = ib * d + ia;
                g[[k, k]] += C64::new(0.0, -w[[ia, ib]]);
            }
        }
    }
    Liouvillian::from_matrix(g).expect("square d² generator")
}

/// Lindblad channels of the fully secular Bloch-Redfield equation.
///
/// Transitions are grouped by Bohr frequency `ω = ω_b − ω_a`; each coupling
/// contributes one channel per group with operator
/// `A_α(ω) = Σ A_ab |ω_a⟩⟨ω_b|` and rate `S_αα(ω)`. The returned Hamiltonian
/// and operators are expressed in the eigenbasis of `h`.
pub fn br_lindblad_form(h: &CMatrix, couplings: &[CouplingSpec]) -> Result<(CMatrix, Vec<LindbladChannel>)> {
    let frame = eigenframe(h)?;
    let d = frame.dim();
    check_couplings(d, couplings)?;
    let groups = bohr_groups(&frame);
    let h_diag = linalg::diag(&frame.energies.iter().map(|&e| C64::new(e, 0.0)).collect::<Vec<_>>());
    let mut channels = Vec::new();
    for coupling in couplings {
        let a = frame.to_eigenbasis(&coupling.operator);
        for (omega, pairs) in &groups {
            let mut op = linalg::zeros(d, d);
            for &(ia, ib) in pairs {
                op[[ia, ib]] = a[[ia, ib]];
            }
            let rate = coupling.spectrum.evaluate(*omega);
            if rate < 0.0 {
                return Err(QmeError::InvalidArgument(format!("negative spectrum S({omega}) = {rate}")));
            }
            channels.push(LindbladChannel { operator: op, rate });
        }
    }
    Ok((h_diag, channels))
}

/// Distinct Bohr frequencies `ω_b − ω_a` with the `(a, b)` pairs sharing them.
pub fn bohr_groups(frame: &EigenFrame) -> Vec<(f64, Vec<(usize, usize)>)> {
    let d = frame.dim();
    let mut transitions: Vec<(f64, usize, usize)> = Vec::with_capacity(d * d);
    for ia in 0..d {
        for ib in 0..d {
            let omega = if ia == ib { 0.0 } else { frame.energies[ib] - frame.energies[ia] };
            transitions.push((omega, ia, ib));
        }
    }
    transitions.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut groups: Vec<(f64, Vec<(usize, usize)>)> = Vec::new();
    for (omega, ia, ib) in transitions {
        match groups.last_mut() {
            Some((w, pairs)) if (omega - *w).abs() <= BOHR_MERGE_TOL => pairs.push((ia, ib)),
            _ => groups.push((omega, vec![(ia, ib)])),
        }
    }
    for (omega, pairs) in &groups {
        let off_diagonal = pairs.iter().filter(|(a, b)| a != b).count();
        if off_diagonal > 1 || (off_diagonal > 0 && pairs.iter().any(|(a, b)| a == b)) {
            log::warn!("degenerate Bohr frequency {omega:.6e}: {} transitions merged into one channel", pairs.len());
        }
    }
    groups
}

/// Pauli rates `W_ab = Σ_α |A^α_ab|² S_αα(ω_ba)`, the rate of `b → a`.
/// The diagonal is zero.
pub fn pauli_rates(h: &CMatrix, couplings: &[CouplingSpec]) -> Result<Array2<f64>> {
    let frame = eigenframe(h)?;
    let d = frame.dim();
    check_couplings(d, couplings)?;
    if d > 1 {
        let spacing = frame.min_spacing();
        if spacing <= MIN_LEVEL_SPACING {
            return Err(QmeError::DegenerateSpectrum(spacing));
        }
    }
    let mut w = Array2::zeros((d, d));
    for coupling in couplings {
        let a = frame.to_eigenbasis(&coupling.operator);
        for ia in 0..d {
            for ib in 0..d {
                if ia != ib {
                    let s = coupling.spectrum.evaluate(frame.bohr_frequencies[[ib, ia]]);
                    w[[ia, ib]] += (a[[ib, ia]] * a[[ia, ib]]).re * s;
                }
            }
        }
    }
    Ok(w)
}

/// Rate-equation generator: `G_ab = W_ab` off the diagonal, `G_aa = −Σ_b W_ba`.
pub fn pauli_generator(w: &Array2<f64>) -> Array2<f64> {
    let d = w.nrows();
    let mut g = w.clone();
    for a in 0..d {
        g[[a, a]] = 0.0;
        let out: f64 = (0..d).filter(|&b| b != a).map(|b| w[[b, a]]).sum();
        g[[a, a]] = -out;
    }
    g
}

/// `p(t) = exp(G t) p₀` at each requested time.
pub fn pauli_propagate(w: &Array2<f64>, p0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
    let d = w.nrows();
    if p0.len() != d {
        return Err(QmeError::DimensionMismatch(format!("{} probabilities for {d} levels", p0.len())));
    }
    if p0.iter().any(|&p| p < 0.0) || (p0.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
        return Err(QmeError::InvalidArgument("initial populations must form a probability vector".into()));
    }
    let g = pauli_generator(w).mapv(|x| C64::new(x, 0.0));
    let p = ndarray::Array1::from_shape_fn(d, |k| C64::new(p0[k], 0.0));
    Ok(times
        .iter()
        .map(|&t| linalg::expm(&g.mapv(|z| z * t)).dot(&p).iter().map(|z| z.re).collect())
        .collect())
}

/// Populations of the thermal state `e^{−βH}/Z` in ascending energy order.
pub fn boltzmann_populations(energies: &[f64], beta: f64) -> Vec<f64> {
    let e0 = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = energies.iter().map(|e| (-beta * (e - e0)).exp()).collect();
    let z: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pauli::*;
    use crate::linalg::re;
    use crate::liouville::build_liouvillian;

    fn spin_boson(eta: f64) -> (CMatrix, Vec<CouplingSpec>) {
        let h = sigma_z().mapv(|z| z * 0.5) + sigma_x().mapv(|z| z * 0.25);
        let spec = NoiseSpectrum::ohmic(eta, 5.0, 2.0).unwrap();
        (h, vec![CouplingSpec::new(sigma_z(), spec).unwrap()])
    }

    #[test]
    fn ohmic_detailed_balance() {
        let (eta, wc, beta) = (0.1, 3.0, 0.7);
        let ratio = ohmic_spectrum(eta, wc, beta, -1.0) / ohmic_spectrum(eta, wc, beta, 1.0);
        assert!((ratio - (-beta * 1.0f64).exp()).abs() < 1e-12);
        assert_eq!(ohmic_spectrum(0.0, wc, beta, 1.0), 0.0);
    }

    #[test]
    fn ohmic_zero_frequency_limit() {
        let (eta, wc, beta) = (0.3, 2.0, 1.5);
        let exact = 2.0 * PI * eta / beta;
        assert!((ohmic_spectrum(eta, wc, beta, 0.0) - exact).abs() < 1e-15);
        // The symmetric average at ±1e-6 cancels the linear term; the cutoff
        // factor leaves a relative offset of order 1e-6 / omega_c.
        let avg = 0.5 * (ohmic_spectrum(eta, wc, beta, 1e-6) + ohmic_spectrum(eta, wc, beta, -1e-6));
        assert!((avg - exact).abs() / exact < 1e-6);
    }

    #[test]
    fn eigenframe_of_sigma_z() {
        let f = eigenframe(&sigma_z()).unwrap();
        assert_eq!(f.energies, vec![-1.0, 1.0]);
        assert!(linalg::max_abs_diff(&f.vectors, &ndarray::array![[re(0.0), re(1.0)], [re(1.0), re(0.0)]]) < 1e-15);
        let g = eigenframe(&linalg::identity(3)).unwrap();
        assert!(g.bohr_frequencies.iter().all(|&w| w == 0.0));
        let udu = linalg::dagger(&g.vectors).dot(&g.vectors);
        assert!(linalg::max_abs_diff(&udu, &linalg::identity(3)) < 1e-14);
    }

    #[test]
    fn zero_coupling_is_von_neumann() {
        let (h, _) = spin_boson(0.0);
        let spec = NoiseSpectrum::ohmic(0.0, 5.0, 2.0).unwrap();
        let c = vec![CouplingSpec::new(sigma_z(), spec).unwrap()];
        let r = bloch_redfield_tensor(&h, &c, true, None).unwrap();
        let frame = eigenframe(&h).unwrap();
        let hd = linalg::diag(&frame.energies.iter().map(|&e| re(e)).collect::<Vec<_>>());
        let vn = build_liouvillian(&hd, &[]).unwrap();
        assert!(linalg::max_abs_diff(r.matrix(), vn.matrix()) < 1e-14);
    }

    #[test]
    fn generator_is_trace_preserving() {
        let (h, c) = spin_boson(0.05);
        let r = bloch_redfield_tensor(&h, &c, true, None).unwrap();
        assert!(r.trace_leakage() < 1e-14);
    }

    #[test]
    fn lindblad_form_channels() {
        let (h, c) = spin_boson(0.05);
        let (_, channels) = br_lindblad_form(&h, &c).unwrap();
        assert_eq!(channels.len(), 3);
        let frame = eigenframe(&h).unwrap();
        let de = frame.energies[1] - frame.energies[0];
        // Groups come out sorted by ω = ω_b − ω_a: upward (−ΔE), dephasing (0), downward (+ΔE).
        let up = &channels[0];
        let down = &channels[2];
        assert!(up.operator[[1, 0]].norm() > 0.0 && up.operator[[0, 1]].norm() == 0.0);
        assert!(down.operator[[0, 1]].norm() > 0.0);
        assert!((up.rate / down.rate - (-2.0 * de).exp()).abs() < 1e-12);
    }

    #[test]
    fn secular_populations_match_lindblad_form() {
        let (h, c) = spin_boson(0.05);
        let r = bloch_redfield_tensor(&h, &c, true, Some(1e-12)).unwrap();
        let (hd, ch) = br_lindblad_form(&h, &c).unwrap();
        let l = build_liouvillian(&hd, &ch).unwrap();
        let d = 2;
        for a in 0..d {
            for b in 0..d {
                let (i, j) = (a * d + a, b * d + b);
                assert!((r.matrix()[[i, j]] - l.matrix()[[i, j]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn pauli_rates_detailed_balance() {
        let (h, c) = spin_boson(0.05);
        let w = pauli_rates(&h, &c).unwrap();
        let f = eigenframe(&h).unwrap();
        let w10 = f.energies[1] - f.energies[0];
        assert!(w.iter().all(|&x| x >= 0.0));
        // W_10 is the rate 0 → 1 (upward), W_01 the rate 1 → 0.
        assert!((w[[1, 0]] / w[[0, 1]] - (-2.0 * w10).exp()).abs() < 1e-10);
        let g = pauli_generator(&w);
        for b in 0..2 {
            assert!(g.column(b).sum().abs() < 1e-14);
        }
    }

    #[test]
    fn pauli_degenerate_spectrum() {
        let spec = NoiseSpectrum::ohmic(0.1, 1.0, 1.0).unwrap();
        let c = vec![CouplingSpec::new(sigma_x(), spec).unwrap()];
        assert!(matches!(pauli_rates(&linalg::identity(2), &c), Err(QmeError::DegenerateSpectrum(_))));
    }

    #[test]
    fn pauli_two_state_boltzmann() {
        let beta = 1.3;
        let w = ndarray::array![[0.0, 2.0], [2.0 * (-beta * 0.8f64).exp(), 0.0]];
        let p = pauli_propagate(&w, &[0.0, 1.0], &[200.0]).unwrap();
        let expected = boltzmann_populations(&[0.0, 0.8], beta);
        assert!((p[0][0] - expected[0]).abs() < 1e-12);
        let still = pauli_propagate(&Array2::zeros((2, 2)), &[0.3, 0.7], &[5.0]).unwrap();
        assert_eq!(still[0], vec![0.3, 0.7]);
    }

    #[test]
    fn tabulated_interpolation() {
        let s = NoiseSpectrum::tabulated(vec![(1.0, 2.0), (0.0, 0.0)]).unwrap();
        assert_eq!(s.evaluate(0.5), 1.0);
        assert_eq!(s.evaluate(2.0), 0.0);
    }
}
