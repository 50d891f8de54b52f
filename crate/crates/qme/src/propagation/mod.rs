//! Time evolution of density operators under a generator.

mod piecewise;
mod rk45;
mod spectral;
mod trotter;

pub use piecewise::{propagate_piecewise, DriveFn, TimeDependentGenerator};
pub use rk45::{rk45_liouvillian, rk45_propagate, rk45_vector, Rk45Options};
pub use spectral::{jitter, spectral_solution, spectral_solution_with_fallback, SpectralDecomposition, DEFAULT_JITTER};
pub use trotter::trotter_propagate;

use crate::error::{QmeError, Result};
use crate::linalg::{self, CMatrix};
use crate::liouville::{devectorize, vectorize, Liouvillian};
use crate::operators::DensityOperator;

/// Evenly spaced times `t0 + k·dt` for `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(QmeError::InvalidArgument(format!("time step {dt} must be positive")));
        }
        if steps == 0 {
            return Err(QmeError::InvalidArgument("time grid needs at least one step".into()));
        }
        Ok(Self { t0, dt, steps })
    }

    /// Grid covering `[0, t_end]` with `steps` intervals.
    pub fn span(t_end: f64, steps: usize) -> Result<Self> {
        Self::new(0.0, t_end / steps as f64, steps)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.steps)
    }

    /// All `steps + 1` grid times.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }
}

/// States sampled at increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityOperator>,
}

impl Trajectory {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, t: f64, state: DensityOperator) {
        self.times.push(t);
        self.states.push(state);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&DensityOperator> {
        self.states.last()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &DensityOperator)> {
        self.times.iter().copied().zip(self.states.iter())
    }

    /// Population of basis state `index` at every time.
    pub fn population(&self, index: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.matrix()[[index, index]].re).collect()
    }

    /// Largest elementwise difference between two trajectories on the same grid.
    pub fn max_deviation(&self, other: &Trajectory) -> f64 {
        self.states
            .iter()
            .zip(other.states.iter())
            .map(|(a, b)| linalg::max_abs_diff(a.matrix(), b.matrix()))
            .fold(0.0, f64::max)
    }
}

pub(crate) fn check_state(l: &Liouvillian, rho0: &DensityOperator) -> Result<()> {
    if rho0.dim() != l.dim() {
        return Err(QmeError::DimensionMismatch(format!(
            "state has dimension {}, generator acts on dimension {}",
            rho0.dim(),
            l.dim()
        )));
    }
    Ok(())
}

/// `exp(L t)` for a generator.
pub fn propagator(l: &Liouvillian, t: f64) -> CMatrix {
    linalg::expm(&l.matrix().mapv(|z| z * t))
}

/// `ρ(t) = devec(exp(L t) vec(ρ₀))`
pub fn propagate_expm(l: &Liouvillian, rho0: &DensityOperator, t: f64) -> Result<DensityOperator> {
    check_state(l, rho0)?;
    if !(t >= 0.0) {
        return Err(QmeError::InvalidArgument(format!("propagation time {t} must be >= 0")));
    }
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    let v = propagator(l, t).dot(&vectorize(rho0.matrix()));
    Ok(DensityOperator::from_matrix_unchecked(devectorize(&v, l.dim())?))
}

/// Exact propagation to every grid time, each exponentiated independently.
pub fn propagate_expm_grid(l: &Liouvillian, rho0: &DensityOperator, times: &[f64]) -> Result<Trajectory> {
    let mut out = Trajectory::with_capacity(times.len());
    for &t in times {
        out.push(t, propagate_expm(l, rho0, t)?);
    }
    Ok(out)
}

/// Repeated application of the single-step propagator `P₁ = exp(L·dt)`.
pub fn semigroup_propagate(l: &Liouvillian, rho0: &DensityOperator, grid: &TimeGrid) -> Result<Trajectory> {
    check_state(l, rho0)?;
    let p1 = propagator(l, grid.dt);
    let d = l.dim();
    let mut v = vectorize(rho0.matrix());
    let mut out = Trajectory::with_capacity(grid.steps + 1);
    out.push(grid.t0, rho0.clone());
    for k in 1..=grid.steps {
        v = p1.dot(&v);
        out.push(grid.time(k), DensityOperator::from_matrix_unchecked(devectorize(&v, d)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pauli::*;
    use crate::liouville::{build_liouvillian, LindbladChannel};

    fn damped_rabi() -> Liouvillian {
        let h = sigma_x().mapv(|z| z * 0.8);
        let ch = [
            LindbladChannel::new(ket_bra(2, 0, 1), 0.3).unwrap(),
            LindbladChannel::new(sigma_z(), 0.05).unwrap(),
        ];
        build_liouvillian(&h, &ch).unwrap()
    }

    #[test]
    fn expm_at_zero_is_identity() {
        let rho = DensityOperator::basis(2, 1);
        assert_eq!(propagate_expm(&damped_rabi(), &rho, 0.0).unwrap(), rho);
        assert!(propagate_expm(&damped_rabi(), &rho, -1.0).is_err());
    }

    #[test]
    fn rabi_formula() {
        let omega = 1.3;
        let l = build_liouvillian(&sigma_x().mapv(|z| z * omega), &[]).unwrap();
        let rho0 = DensityOperator::basis(2, 0);
        for k in 0..20 {
            let t = 0.17 * k as f64;
            let rho = propagate_expm(&l, &rho0, t).unwrap();
            let expected = (omega * t).sin().powi(2);
            assert!((rho.matrix()[[1, 1]].re - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn semigroup_matches_expm() {
        let l = damped_rabi();
        let rho0 = DensityOperator::basis(2, 1);
        let grid = TimeGrid::new(0.0, 0.01, 1000).unwrap();
        let traj = semigroup_propagate(&l, &rho0, &grid).unwrap();
        let exact = propagate_expm(&l, &rho0, grid.t_end()).unwrap();
        assert!(linalg::max_abs_diff(traj.last().unwrap().matrix(), exact.matrix()) < 1e-9);
        assert_eq!(traj.len(), 1001);

        let one = semigroup_propagate(&l, &rho0, &TimeGrid::new(0.0, 0.5, 1).unwrap()).unwrap();
        let direct = propagate_expm(&l, &rho0, 0.5).unwrap();
        assert_eq!(one.last().unwrap(), &direct);
    }

    #[test]
    fn semigroup_composition() {
        let l = damped_rabi();
        let p = propagator(&l, 0.3);
        let p2 = propagator(&l, 0.6);
        assert!(linalg::max_abs_diff(&p.dot(&p), &p2) < 1e-12);
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(0.0, 0.0, 3).is_err());
        assert!(TimeGrid::new(0.0, 0.1, 0).is_err());
        let g = TimeGrid::span(2.0, 4).unwrap();
        assert_eq!(g.times(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }
}
