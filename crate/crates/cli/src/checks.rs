//! Self-checks run by `qme run --check`.

use qme::correlations::local_maxima;
use qme::floquet::periodic_distance;
use qme::linalg;
use qme::operators::{min_eigenvalue, partial_trace, purity, Subsystem};
use qme::propagation::Trajectory;
use qme::redfield::eigenframe;

use crate::config::{CheckConfig, Method};
use crate::error::CliResult;
use crate::run::{self, RunData};
use crate::scenario::Scenario;

pub const CPTP_TRACE_TOL: f64 = 1e-8;
pub const CPTP_HERMITICITY_TOL: f64 = 1e-8;
pub const CPTP_MIN_EIGENVALUE: f64 = -1e-7;
/// Spectrum maxima below this fraction of the global maximum are ignored.
pub const PEAK_FLOOR: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Worst trace, Hermiticity and positivity deviations along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CptpReport {
    pub trace_dev: f64,
    pub hermiticity_dev: f64,
    pub min_eigenvalue: f64,
}

impl CptpReport {
    pub fn passed(&self) -> bool {
        self.trace_dev <= CPTP_TRACE_TOL && self.hermiticity_dev <= CPTP_HERMITICITY_TOL && self.min_eigenvalue >= CPTP_MIN_EIGENVALUE
    }
}

pub fn cptp_report(traj: &Trajectory) -> CliResult<CptpReport> {
    let mut r = CptpReport {
        trace_dev: 0.0,
        hermiticity_dev: 0.0,
        min_eigenvalue: f64::INFINITY,
    };
    for state in &traj.states {
        let m = state.matrix();
        r.trace_dev = r.trace_dev.max((linalg::trace(m) - linalg::ONE).norm());
        r.hermiticity_dev = r.hermiticity_dev.max(linalg::hermiticity_deviation(m));
        r.min_eigenvalue = r.min_eigenvalue.min(min_eigenvalue(m)?);
    }
    Ok(r)
}

/// Largest population difference between two trajectories on the same grid.
pub fn max_population_deviation(a: &Trajectory, b: &Trajectory) -> f64 {
    a.states
        .iter()
        .zip(&b.states)
        .flat_map(|(x, y)| x.populations().into_iter().zip(y.populations()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

/// Distance from each predicted location to the nearest local maximum.
pub fn nearest_peaks(xs: &[f64], values: &[f64], predicted: &[f64]) -> Vec<f64> {
    let maxima = local_maxima(values);
    predicted
        .iter()
        .map(|&p| maxima.iter().map(|&k| (xs[k] - p).abs()).fold(f64::INFINITY, f64::min))
        .collect()
}

fn check_scenario(s: &Scenario, data: &RunData) -> CliResult<Option<CheckOutcome>> {
    let Some(check) = &s.config.check else {
        return Ok(None);
    };
    let traj = || data.trajectory.as_ref().expect("checks that read states run on trajectory solvers");
    let outcome = match check {
        CheckConfig::PurityCurve { tol } => {
            let mut worst: f64 = 0.0;
            for (t, state) in traj().iter() {
                let p = purity(&partial_trace(state, (2, 2), Subsystem::First)?);
                worst = worst.max((p - (t.cos().powi(4) + t.sin().powi(4))).abs());
            }
            CheckOutcome::new("purity_curve", worst <= *tol, format!("max |purity − (cos⁴θ + sin⁴θ)| = {worst:.3e}"))
        }
        CheckConfig::FinalPopulations { expected, tol } => {
            let last = traj().last().expect("non-empty trajectory").populations();
            let dev = last.iter().zip(expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            CheckOutcome::new("final_populations", dev <= *tol, format!("final populations {last:?}, deviation {dev:.3e}"))
        }
        CheckConfig::MethodAgreement { methods, tol } => {
            let mut trajs = Vec::new();
            for &m in methods {
                trajs.push((m, run::simulate(s, m)?.expect("Lindblad solvers return states")));
            }
            let mut worst: f64 = 0.0;
            let mut pair = String::new();
            for i in 0..trajs.len() {
                for j in i + 1..trajs.len() {
                    let dev = max_population_deviation(&trajs[i].1, &trajs[j].1);
                    if dev >= worst {
                        worst = dev;
                        pair = format!("{}/{}", trajs[i].0.name(), trajs[j].0.name());
                    }
                }
            }
            CheckOutcome::new("method_agreement", worst <= *tol, format!("max population deviation {worst:.3e} ({pair})"))
        }
        CheckConfig::PiecewiseConvergence { tol } => {
            let reference = run::simulate(&tight_rk45(s)?, Method::Rk45)?.expect("states");
            let dev = max_population_deviation(traj(), &reference);
            let sub = s.config.solver.substeps.unwrap_or(1);
            let endpoint = |substeps: usize| -> CliResult<f64> {
                let mut c = s.config.clone();
                c.solver.substeps = Some(substeps);
                let t = run::simulate(&crate::scenario::resolve(c, s.seed)?, Method::Piecewise)?.expect("states");
                Ok(linalg::max_abs_diff(t.last().unwrap().matrix(), reference.last().unwrap().matrix()))
            };
            let ratio = endpoint(sub)? / endpoint(2 * sub)?;
            let passed = dev <= *tol && (1.6..=2.4).contains(&ratio);
            CheckOutcome::new(
                "piecewise_convergence",
                passed,
                format!("max deviation from rk45 {dev:.3e}; endpoint error ratio on halving dt {ratio:.3}"),
            )
        }
        CheckConfig::SemigroupLaw { tol } => {
            let a = run::simulate(s, Method::Semigroup)?.expect("states");
            let b = run::simulate(s, Method::Expm)?.expect("states");
            let dev = a
                .states
                .iter()
                .zip(&b.states)
                .map(|(x, y)| linalg::max_abs_diff(x.matrix(), y.matrix()))
                .fold(0.0, f64::max);
            CheckOutcome::new("semigroup_law", dev <= *tol, format!("max |P(dt)ᵏρ₀ − e^(L t_k)ρ₀| = {dev:.3e}"))
        }
        CheckConfig::TrotterConvergence { steps, slope_min, slope_max } => {
            let errs = run::trotter_errors(s, steps)?;
            let monotone = errs.windows(2).all(|w| w[1].2 < w[0].2);
            let dts: Vec<f64> = errs.iter().map(|e| e.1).collect();
            let es: Vec<f64> = errs.iter().map(|e| e.2).collect();
            let slope = log_log_slope(&dts, &es);
            let passed = monotone && (*slope_min..=*slope_max).contains(&slope);
            CheckOutcome::new(
                "trotter_convergence",
                passed,
                format!("errors {}, monotone {monotone}, log-log slope {slope:.3}", sci(&es)),
            )
        }
        CheckConfig::McwfAccuracy { tol } => {
            let exact = run::simulate(s, Method::Expm)?.expect("states");
            let dev = traj()
                .states
                .iter()
                .zip(&exact.states)
                .map(|(x, y)| linalg::max_abs_diff(x.matrix(), y.matrix()))
                .fold(0.0, f64::max);
            CheckOutcome::new("mcwf_accuracy", dev <= *tol, format!("max |ρ_mcwf − ρ_exact| entry {dev:.3e}"))
        }
        CheckConfig::SpectrumPeaks {} => {
            let frame = eigenframe(&s.hamiltonian)?;
            let e = &frame.energies;
            let step = |sp: &qme::correlations::Spectrum| sp.omegas[1] - sp.omegas[0];
            let mut bad = Vec::new();
            let mut count = 0;
            for sp in &data.spectra {
                let top = sp.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                for k in local_maxima(&sp.values) {
                    if sp.values[k] < PEAK_FLOOR * top {
                        continue;
                    }
                    count += 1;
                    let w = sp.omegas[k];
                    let near = e.iter().flat_map(|a| e.iter().map(move |b| (a - b).abs())).any(|bohr| (w - bohr).abs() <= step(sp));
                    if !near {
                        bad.push(w);
                    }
                }
            }
            CheckOutcome::new(
                "spectrum_peaks",
                bad.is_empty() && count > 0,
                format!("{count} peak(s); off-resonant: {bad:?}"),
            )
        }
        CheckConfig::PauliAgreement { tol, simplex_tol } => {
            let br = if s.method() == Method::BlochRedfield {
                traj().clone()
            } else {
                run::simulate(s, Method::BlochRedfield)?.expect("states")
            };
            let pauli = run::pauli_trajectory(s)?;
            let mut dev: f64 = 0.0;
            let mut simplex: f64 = 0.0;
            for (state, p) in br.states.iter().zip(&pauli) {
                for (a, b) in state.populations().iter().zip(p) {
                    dev = dev.max((a - b).abs());
                }
                let low = p.iter().copied().fold(0.0, f64::min);
                simplex = simplex.max(-low).max((p.iter().sum::<f64>() - 1.0).abs());
            }
            CheckOutcome::new(
                "pauli_agreement",
                dev <= *tol && simplex <= *simplex_tol,
                format!("max |p_BR − p_Pauli| = {dev:.3e}, simplex violation {simplex:.3e}"),
            )
        }
        CheckConfig::FloquetResonances { dual_route_tol, photons } => {
            let (hf, prop) = run::floquet_dual_route(s)?;
            let omega = s.floquet_setup().and_then(|f| f.omega).expect("validated");
            let route = hf
                .iter()
                .zip(&prop)
                .map(|(a, b)| periodic_distance(*a, *b, omega))
                .fold(0.0, f64::max);
            let (ws, ps) = run::floquet_sweep(s, 0, 1)?;
            let gap = {
                let e = linalg::eigvalsh(&s.hamiltonian)?;
                e[1] - e[0]
            };
            let predicted: Vec<f64> = photons.iter().map(|&n| gap / n as f64).collect();
            let step = ws[1] - ws[0];
            let distances = nearest_peaks(&ws, &ps, &predicted);
            let located = distances.iter().all(|&dist| dist <= step * (1.0 + 1e-9));
            CheckOutcome::new(
                "floquet_resonances",
                route <= *dual_route_tol && located,
                format!(
                    "quasi-energy route difference {route:.3e}; predicted {}, nearest maxima at distance {} (grid step {step})",
                    sci(&predicted),
                    sci(&distances)
                ),
            )
        }
    };
    Ok(Some(outcome))
}

fn sci(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn tight_rk45(s: &Scenario) -> CliResult<Scenario> {
    let mut c = s.config.clone();
    c.solver.rtol = Some(1e-10);
    c.solver.atol = Some(1e-12);
    crate::scenario::resolve(c, s.seed)
}

/// Runs the scenario's embedded check plus, for deterministic Lindblad
/// solvers, the CPTP property check.
pub fn evaluate(s: &Scenario, data: &RunData) -> CliResult<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    let method = s.method();
    if method.is_lindblad() && method != Method::Mcwf {
        if let Some(traj) = &data.trajectory {
            let r = cptp_report(traj)?;
            out.push(CheckOutcome::new(
                "cptp",
                r.passed(),
                format!(
                    "trace deviation {:.3e}, Hermiticity deviation {:.3e}, min eigenvalue {:.3e}",
                    r.trace_dev, r.hermiticity_dev, r.min_eigenvalue
                ),
            ));
        }
    }
    if let Some(c) = check_scenario(s, data)? {
        out.push(c);
    }
    Ok(out)
}
