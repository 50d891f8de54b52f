//! Monte Carlo wave-function unraveling of the Lindblad equation.
//!
//! Each trajectory evolves a pure state with the non-Hermitian effective
//! Hamiltonian `H_eff = H − (i/2) Σ_k L_k†L_k` and random quantum jumps.
//! Averaging the projectors over many trajectories recovers the density
//! operator of the master equation.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{QmeError, Result};
use crate::linalg::{self, CMatrix, CVector, C64, I};
use crate::liouville::LindbladChannel;
use crate::operators::{DensityOperator, PureState};
use crate::propagation::Trajectory;

/// Norm below which a propagated state is considered lost.
pub const ZERO_NORM_TOL: f64 = 1e-14;
/// Trajectories summed sequentially before partial sums are combined.
const CHUNK: usize = 32;

/// Parameters of a trajectory ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig {
    pub hamiltonian: CMatrix,
    pub channels: Vec<LindbladChannel>,
    pub dt: f64,
    pub n_steps: usize,
    pub n_trajectories: usize,
    pub seed: u64,
}

impl TrajectoryConfig {
    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| k as f64 * self.dt).collect()
    }

    fn validate(&self) -> Result<()> {
        let d = linalg::ensure_square(&self.hamiltonian)?;
        let dev = linalg::hermiticity_deviation(&self.hamiltonian);
        if dev > 1e-10 {
            return Err(QmeError::NonHermitianHamiltonian(dev));
        }
        for (k, ch) in self.channels.iter().enumerate() {
            if ch.dim() != d {
                return Err(QmeError::DimensionMismatch(format!("channel {k} has dimension {}, expected {d}", ch.dim())));
            }
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(QmeError::InvalidArgument(format!("time step {} must be positive", self.dt)));
        }
        Ok(())
    }
}

/// `H − (i/2) Σ_k γ_k L_k†L_k`
pub fn effective_hamiltonian(h: &CMatrix, channels: &[LindbladChannel]) -> CMatrix {
    let mut heff = h.clone();
    for ch in channels {
        let l = ch.folded();
        let ldl = linalg::dagger(&l).dot(&l);
        heff.scaled_add(C64::new(0.0, -0.5), &ldl);
    }
    heff
}

/// Independent random stream for trajectory `index` of an ensemble seeded by `seed`.
pub fn trajectory_stream(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Operators precomputed from a configuration.
struct Stepper {
    drift: CMatrix,
    jumps: Vec<CMatrix>,
    jump_norms: Vec<CMatrix>,
    dt: f64,
}

impl Stepper {
    fn new(cfg: &TrajectoryConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim();
        let heff = effective_hamiltonian(&cfg.hamiltonian, &cfg.channels);
        let heff_norm = linalg::operator_norm(&heff)?;
        if cfg.dt * heff_norm > 0.1 {
            log::warn!("dt·‖H_eff‖ = {:.3} exceeds 0.1; first-order drift is inaccurate", cfg.dt * heff_norm);
        }
        let drift = linalg::identity(d) - heff.mapv(|z| z * I * cfg.dt);
        let jumps: Vec<CMatrix> = cfg.channels.iter().map(LindbladChannel::folded).collect();
        let jump_norms = jumps.iter().map(|l| linalg::dagger(l).dot(l)).collect();
        Ok(Self {
            drift,
            jumps,
            jump_norms,
            dt: cfg.dt,
        })
    }

    /// One step; returns the index of the channel that fired, if any.
    fn step<R: Rng + ?Sized>(&self, psi: &mut CVector, rng: &mut R) -> Result<Option<usize>> {
        let dps: Vec<f64> = self
            .jump_norms
            .iter()
            .map(|m| self.dt * expectation_re(psi, m))
            .collect();
        let dp: f64 = dps.iter().sum();
        if dp >= 1.0 {
            return Err(QmeError::JumpBudgetExceeded(dp));
        }
        // u in (0, 1]
        let u = 1.0 - rng.random::<f64>();
        let (next, fired) = if dp < u {
            (self.drift.dot(psi), None)
        } else {
            let u2: f64 = rng.random();
            let mut cumulative = 0.0;
            let mut chosen = dps.len() - 1;
            for (k, p) in dps.iter().enumerate() {
                cumulative += p / dp;
                if cumulative > u2 {
                    chosen = k;
                    break;
                }
            }
            (self.jumps[chosen].dot(psi), Some(chosen))
        };
        let norm = linalg::vector_norm(&next);
        if norm < ZERO_NORM_TOL {
            return Err(QmeError::ZeroNorm(norm));
        }
        *psi = next.mapv(|z| z / norm);
        Ok(fired)
    }
}

fn expectation_re(psi: &CVector, m: &CMatrix) -> f64 {
    let mpsi = m.dot(psi);
    psi.iter().zip(mpsi.iter()).map(|(a, b)| (a.conj() * b).re).sum()
}

/// A single stochastic trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    /// State at each of the `n_steps + 1` grid times.
    pub states: Vec<PureState>,
    /// `(step, channel)` for every jump, where the jump happened during step `step`.
    pub jumps: Vec<(usize, usize)>,
}

/// Samples one trajectory from `psi0` using the supplied random stream.
pub fn sample_trajectory<R: Rng + ?Sized>(cfg: &TrajectoryConfig, psi0: &PureState, rng: &mut R) -> Result<TrajectoryRecord> {
    let stepper = Stepper::new(cfg)?;
    check_initial(cfg, psi0)?;
    run(&stepper, cfg.n_steps, psi0, rng, |_, _| {})
}

fn check_initial(cfg: &TrajectoryConfig, psi0: &PureState) -> Result<()> {
    if psi0.dim() != cfg.dim() {
        return Err(QmeError::DimensionMismatch(format!(
            "initial state has dimension {}, Hamiltonian has {}",
            psi0.dim(),
            cfg.dim()
        )));
    }
    Ok(())
}

fn run<R: Rng + ?Sized, F: FnMut(usize, &CVector)>(
    stepper: &Stepper,
    n_steps: usize,
    psi0: &PureState,
    rng: &mut R,
    mut visit: F,
) -> Result<TrajectoryRecord> {
    let mut psi = psi0.amplitudes().clone();
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut jumps = Vec::new();
    visit(0, &psi);
    states.push(psi0.clone());
    for k in 0..n_steps {
        if let Some(ch) = stepper.step(&mut psi, rng)? {
            jumps.push((k, ch));
        }
        visit(k + 1, &psi);
        states.push(PureState::normalized(psi.clone())?);
    }
    Ok(TrajectoryRecord { states, jumps })
}

/// Ensemble-averaged density operator and jump statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub mean_state: Trajectory,
    pub n: usize,
    /// Number of jumps in each trajectory, in trajectory order.
    pub jump_counts: Vec<usize>,
    observable_sums: Vec<Vec<f64>>,
    observable_sq_sums: Vec<Vec<f64>>,
}

impl EnsembleResult {
    /// Mean number of jumps per trajectory and its standard error.
    pub fn jump_statistics(&self) -> (f64, f64) {
        mean_and_stderr(self.jump_counts.iter().map(|&c| c as f64))
    }

    /// Ensemble mean of `Re⟨A_k⟩` at each time, for the `k`-th requested observable.
    pub fn observable_mean(&self, k: usize) -> Vec<f64> {
        let n = self.n as f64;
        self.observable_sums[k].iter().map(|s| s / n).collect()
    }

    /// Standard error of the ensemble mean of `Re⟨A_k⟩` at each time.
    pub fn observable_stderr(&self, k: usize) -> Vec<f64> {
        let n = self.n as f64;
        self.observable_sums[k]
            .iter()
            .zip(&self.observable_sq_sums[k])
            .map(|(s, sq)| {
                if self.n < 2 {
                    return 0.0;
                }
                let mean = s / n;
                let var = ((sq / n) - mean * mean).max(0.0) * n / (n - 1.0);
                (var / n).sqrt()
            })
            .collect()
    }
}

fn mean_and_stderr(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Partial sums over a contiguous block of trajectories.
struct Partial {
    rho: Vec<CMatrix>,
    obs: Vec<Vec<f64>>,
    obs_sq: Vec<Vec<f64>>,
    jumps: Vec<usize>,
}

impl Partial {
    fn new(points: usize, d: usize, n_obs: usize) -> Self {
        Self {
            rho: vec![linalg::zeros(d, d); points],
            obs: vec![vec![0.0; points]; n_obs],
            obs_sq: vec![vec![0.0; points]; n_obs],
            jumps: Vec::new(),
        }
    }

    fn merge(mut self, other: Partial) -> Partial {
        for (a, b) in self.rho.iter_mut().zip(other.rho) {
            *a += &b;
        }
        for (a, b) in self.obs.iter_mut().zip(other.obs) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.obs_sq.iter_mut().zip(other.obs_sq) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.jumps.extend(other.jumps);
        self
    }
}

/// `ρ(t) = (1/N) Σ_j |ψ_j(t)⟩⟨ψ_j(t)|` over `cfg.n_trajectories` trajectories.
pub fn ensemble_average(cfg: &TrajectoryConfig, psi0: &PureState) -> Result<EnsembleResult> {
    ensemble_average_with_observables(cfg, psi0, &[])
}

/// [`ensemble_average`] that also accumulates per-trajectory statistics of
/// `Re⟨ψ|A|ψ⟩` for each observable.
///
/// Trajectory `j` draws from stream `j` of the seed. Sums are taken in a
/// fixed order, so the result does not depend on the number of threads.
pub fn ensemble_average_with_observables(
    cfg: &TrajectoryConfig,
    psi0: &PureState,
    observables: &[CMatrix],
) -> Result<EnsembleResult> {
    if cfg.n_trajectories == 0 {
        return Err(QmeError::InvalidArgument("at least one trajectory is required".into()));
    }
    let stepper = Stepper::new(cfg)?;
    check_initial(cfg, psi0)?;
    let d = cfg.dim();
    for a in observables {
        if a.nrows() != d || a.ncols() != d {
            return Err(QmeError::DimensionMismatch("observable does not match the system dimension".into()));
        }
    }
    let points = cfg.n_steps + 1;
    let n_chunks = cfg.n_trajectories.div_ceil(CHUNK);

    let partials: Vec<Result<Partial>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Partial::new(points, d, observables.len());
            let start = c * CHUNK;
            let end = (start + CHUNK).min(cfg.n_trajectories);
            for j in start..end {
                let mut rng = trajectory_stream(cfg.seed, j as u64);
                let record = run(&stepper, cfg.n_steps, psi0, &mut rng, |k, psi| {
                    add_projector(&mut acc.rho[k], psi);
                    for (a, obs) in observables.iter().enumerate() {
                        let v = expectation_re(psi, obs);
                        acc.obs[a][k] += v;
                        acc.obs_sq[a][k] += v * v;
                    }
                })?;
                acc.jumps.push(record.jumps.len());
            }
            Ok(acc)
        })
        .collect();

    let mut total = Partial::new(points, d, observables.len());
    for p in partials {
        total = total.merge(p?);
    }
    let inv_n = 1.0 / cfg.n_trajectories as f64;
    let mut mean_state = Trajectory::with_capacity(points);
    for (k, rho) in total.rho.into_iter().enumerate() {
        mean_state.push(k as f64 * cfg.dt, DensityOperator::from_matrix_unchecked(rho.mapv(|z| z * inv_n)));
    }
    Ok(EnsembleResult {
        mean_state,
        n: cfg.n_trajectories,
        jump_counts: total.jumps,
        observable_sums: total.obs,
        observable_sq_sums: total.obs_sq,
    })
}

fn add_projector(acc: &mut CMatrix, psi: &CVector) {
    let d = psi.len();
    for i in 0..d {
        for j in 0..d {
            acc[[i, j]] += psi[i] * psi[j].conj();
        }
    }
}

/// Jump probability `δp = dt Σ_k ⟨ψ|L_k†L_k|ψ⟩` for a state.
pub fn jump_probability(cfg: &TrajectoryConfig, psi: &PureState) -> f64 {
    cfg.channels
        .iter()
        .map(|ch| {
            let l = ch.folded();
            cfg.dt * expectation_re(psi.amplitudes(), &linalg::dagger(&l).dot(&l))
        })
        .sum()
}

/// Normalized amplitudes from a slice, for building initial states.
pub fn state_from(amplitudes: &[C64]) -> Result<PureState> {
    PureState::normalized(Array1::from(amplitudes.to_vec()))
}
