use std::sync::Arc;

use super::{check_state, TimeGrid, Trajectory};
use crate::error::{QmeError, Result};
use crate::linalg::{self, CMatrix};
use crate::liouville::{devectorize, vectorize, Liouvillian};
use crate::operators::DensityOperator;

/// Scalar drive amplitude `v(t)`.
pub type DriveFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `L(t) = L₀ + Σ_i v_i(t) L_i`
#[derive(Clone)]
pub struct TimeDependentGenerator {
    static_part: Liouvillian,
    driven_parts: Vec<(Liouvillian, DriveFn)>,
}

impl std::fmt::Debug for TimeDependentGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TimeDependentGenerator")
            .field("dim", &self.static_part.dim())
            .field("driven_parts", &self.driven_parts.len())
            .finish()
    }
}

impl TimeDependentGenerator {
    pub fn new(static_part: Liouvillian) -> Self {
        Self {
            static_part,
            driven_parts: Vec::new(),
        }
    }

    /// Adds a term `v(t)·L_i`.
    pub fn with_drive(mut self, part: Liouvillian, drive: DriveFn) -> Result<Self> {
        if part.dim() != self.static_part.dim() {
            return Err(QmeError::DimensionMismatch(format!(
                "driven part has dimension {}, static part has {}",
                part.dim(),
                self.static_part.dim()
            )));
        }
        self.driven_parts.push((part, drive));
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.static_part.dim()
    }

    pub fn static_part(&self) -> &Liouvillian {
        &self.static_part
    }

    pub fn is_static(&self) -> bool {
        self.driven_parts.is_empty()
    }

    /// Generator matrix at time `t`.
    pub fn matrix_at(&self, t: f64) -> CMatrix {
        let mut m = self.static_part.matrix().clone();
        for (part, drive) in &self.driven_parts {
            let v = drive(t);
            if v != 0.0 {
                m.scaled_add(linalg::re(v), part.matrix());
            }
        }
        m
    }

    pub fn at(&self, t: f64) -> Liouvillian {
        Liouvillian::from_matrix(self.matrix_at(t)).expect("parts share dimension")
    }
}

/// `ρ_{n+1} = devec(exp(L(t_n)·dt) vec(ρ_n))`, sampling the drives at the
/// start of each interval.
pub fn propagate_piecewise(g: &TimeDependentGenerator, rho0: &DensityOperator, grid: &TimeGrid) -> Result<Trajectory> {
    check_state(g.static_part(), rho0)?;
    let d = g.dim();
    let dt = grid.dt;
    let static_scaled = g.static_part().matrix().mapv(|z| z * dt);
    let fixed_step = g.is_static().then(|| linalg::expm(&static_scaled));
    let mut warned = false;

    let mut v = vectorize(rho0.matrix());
    let mut out = Trajectory::with_capacity(grid.steps + 1);
    out.push(grid.t0, rho0.clone());
    for k in 0..grid.steps {
        let t = grid.time(k);
        let owned;
        let step = match &fixed_step {
            Some(p) => p,
            None => {
                let mut a = static_scaled.clone();
                for (part, drive) in &g.driven_parts {
                    let c = drive(t) * dt;
                    if c != 0.0 {
                        a.scaled_add(linalg::re(c), part.matrix());
                    }
                }
                let norm = linalg::one_norm(&a);
                if !warned && norm > 0.1 {
                    log::warn!("piecewise step dt·‖L(t)‖ = {norm:.3} exceeds 0.1 at t = {t}");
                    warned = true;
                }
                owned = linalg::expm(&a);
                &owned
            }
        };
        v = step.dot(&v);
        out.push(grid.time(k + 1), DensityOperator::from_matrix_unchecked(devectorize(&v, d)?));
    }
    Ok(out)
}
