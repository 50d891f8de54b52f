use super::{check_state, Trajectory};
use crate::error::{QmeError, Result};
use crate::linalg::{CMatrix, CVector, C64};
use crate::liouville::{devectorize_square, vectorize, Liouvillian};
use crate::operators::DensityOperator;

/// Tolerances for the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rk45Options {
    pub rtol: f64,
    pub atol: f64,
    /// First trial step; chosen automatically when `None`.
    pub initial_step: Option<f64>,
}

impl Default for Rk45Options {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            initial_step: None,
        }
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Dense-output weights for the fourth-order continuous extension.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

fn combine(y: &CVector, h: f64, coeffs: &[f64], k: &[CVector]) -> CVector {
    let mut out = y.clone();
    for (c, ki) in coeffs.iter().zip(k) {
        if *c != 0.0 {
            out.scaled_add(C64::new(h * c, 0.0), ki);
        }
    }
    out
}

fn scaled_norm(v: &CVector, y0: &CVector, y1: &CVector, opts: &Rk45Options) -> f64 {
    let n = v.len();
    if n == 0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let (a, b) = (y0[i], y1[i]);
        let sc_re = opts.atol + opts.rtol * a.re.abs().max(b.re.abs());
        let sc_im = opts.atol + opts.rtol * a.im.abs().max(b.im.abs());
        acc += (v[i].re / sc_re).powi(2) + (v[i].im / sc_im).powi(2);
    }
    (acc / (2 * n) as f64).sqrt()
}

fn initial_step<F: FnMut(f64, &CVector) -> CVector>(
    rhs: &mut F,
    t0: f64,
    y0: &CVector,
    f0: &CVector,
    span: f64,
    opts: &Rk45Options,
) -> f64 {
    let d0 = scaled_norm(y0, y0, y0, opts);
    let d1 = scaled_norm(f0, y0, y0, opts);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let mut y1 = y0.clone();
    y1.scaled_add(C64::new(h0, 0.0), f0);
    let f1 = rhs(t0 + h0, &y1);
    let d2 = scaled_norm(&(&f1 - f0), y0, y0, opts) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Adaptive Dormand-Prince 5(4) integration of `dy/dt = f(t, y)`, reporting
/// `y` at each of the increasing `times` through the continuous extension.
/// `times[0]` is the initial time.
pub fn rk45_vector<F: FnMut(f64, &CVector) -> CVector>(
    mut rhs: F,
    y0: &CVector,
    times: &[f64],
    opts: &Rk45Options,
) -> Result<Vec<CVector>> {
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(QmeError::InvalidArgument("rk45 tolerances must be positive".into()));
    }
    let Some((&t0, rest)) = times.split_first() else {
        return Ok(Vec::new());
    };
    if rest.iter().zip(times.iter()).any(|(b, a)| b < a) {
        return Err(QmeError::InvalidArgument("output times must be non-decreasing".into()));
    }
    let t_end = *times.last().unwrap();
    let span = t_end - t0;
    let mut out = Vec::with_capacity(times.len());
    out.push(y0.clone());
    if span == 0.0 {
        out.resize(times.len(), y0.clone());
        return Ok(out);
    }

    let mut t = t0;
    let mut y = y0.clone();
    let mut k1 = rhs(t, &y);
    let mut h = match opts.initial_step {
        Some(h) => h.min(span),
        None => initial_step(&mut rhs, t0, &y, &k1, span, opts),
    };
    let min_step = 1e-14 * span;
    let mut next = 1;
    let mut rejected = false;

    while next < times.len() {
        if h < min_step {
            return Err(QmeError::StepSizeUnderflow { t, dt: h });
        }
        let h_step = h.min(t_end - t);
        let mut k = Vec::with_capacity(7);
        k.push(k1.clone());
        let stages: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
        for (s, a) in stages.iter().enumerate() {
            let ys = combine(&y, h_step, a, &k);
            k.push(rhs(t + C[s + 1] * h_step, &ys));
        }
        let y_new = combine(&y, h_step, &B, &k);
        let k7 = rhs(t + h_step, &y_new);
        k.push(k7);
        let mut err_vec = CVector::zeros(y.len());
        for (e, ki) in E.iter().zip(&k) {
            if *e != 0.0 {
                err_vec.scaled_add(C64::new(h_step * e, 0.0), ki);
            }
        }
        let mut err = scaled_norm(&err_vec, &y, &y_new, opts);
        if !err.is_finite() {
            err = f64::INFINITY;
        }

        if err <= 1.0 {
            let t_new = if h_step == t_end - t { t_end } else { t + h_step };
            if next < times.len() && times[next] <= t_new {
                let r2 = &y_new - &y;
                let r3 = &k[0].mapv(|z| z * h_step) - &r2;
                let r4 = &(&r2 - &k[6].mapv(|z| z * h_step)) - &r3;
                let r5 = combine(&CVector::zeros(y.len()), h_step, &D, &k);
                while next < times.len() && times[next] <= t_new {
                    let tau = times[next];
                    if tau == t_new {
                        out.push(y_new.clone());
                    } else {
                        let th = (tau - t) / h_step;
                        let th1 = 1.0 - th;
                        let inner = &r4 + &r5.mapv(|z| z * th1);
                        let inner = &r3 + &inner.mapv(|z| z * th);
                        let inner = &r2 + &inner.mapv(|z| z * th1);
                        out.push(&y + &inner.mapv(|z| z * th));
                    }
                    next += 1;
                }
            }
            t = t_new;
            y = y_new;
            k1 = k.pop().unwrap();
            let grow = if err == 0.0 { 10.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 10.0) };
            h = if rejected { h_step * grow.min(1.0) } else { h_step * grow };
            rejected = false;
        } else {
            let shrink = if err.is_finite() { (0.9 * err.powf(-0.2)).max(0.2) } else { 0.2 };
            h = h_step * shrink;
            rejected = true;
        }
    }
    Ok(out)
}

/// Integrates a density-matrix equation `dρ/dt = f(t, ρ)`; `f` may be
/// time-dependent or nonlinear.
pub fn rk45_propagate<F: FnMut(f64, &CMatrix) -> CMatrix>(
    mut rhs: F,
    rho0: &DensityOperator,
    times: &[f64],
    opts: &Rk45Options,
) -> Result<Trajectory> {
    let d = rho0.dim();
    let wrapped = |t: f64, v: &CVector| {
        let rho = devectorize_square(v).expect("state length is d²");
        vectorize(&rhs(t, &rho))
    };
    let ys = rk45_vector(wrapped, &vectorize(rho0.matrix()), times, opts)?;
    let mut out = Trajectory::with_capacity(times.len());
    for (&t, v) in times.iter().zip(ys) {
        out.push(t, DensityOperator::from_matrix_unchecked(crate::liouville::devectorize(&v, d)?));
    }
    Ok(out)
}

/// [`rk45_propagate`] for a time-independent generator.
pub fn rk45_liouvillian(l: &Liouvillian, rho0: &DensityOperator, times: &[f64], opts: &Rk45Options) -> Result<Trajectory> {
    check_state(l, rho0)?;
    let m = l.matrix();
    let ys = rk45_vector(|_, v| m.dot(v), &vectorize(rho0.matrix()), times, opts)?;
    let mut out = Trajectory::with_capacity(times.len());
    for (&t, v) in times.iter().zip(ys) {
        out.push(t, DensityOperator::from_matrix_unchecked(crate::liouville::devectorize(&v, l.dim())?));
    }
    Ok(out)
}
