//! Executes a resolved scenario and tabulates its outputs.

use qme::correlations::{self, CorrelationSeries, Spectrum};
use qme::floquet;
use qme::linalg::{self, CMatrix};
use qme::liouville::{build_liouvillian, Liouvillian};
use qme::mcwf::{ensemble_average, TrajectoryConfig};
use qme::operators::{partial_trace, purity, DensityOperator, Subsystem};
use qme::propagation::{
    propagate_expm, propagate_expm_grid, propagate_piecewise, rk45_liouvillian, rk45_propagate, semigroup_propagate,
    spectral_solution_with_fallback, trotter_propagate, Rk45Options, TimeGrid, Trajectory, DEFAULT_JITTER,
};
use qme::redfield::{bloch_redfield_tensor, eigenframe, pauli_propagate, pauli_rates};
use rayon::prelude::*;

use crate::builders;
use crate::config::{Method, OutputConfig, SpectrumMode, TauConfig};
use crate::error::{CliError, CliResult};
use crate::scenario::Scenario;

/// Numeric table written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// Everything produced by one run.
#[derive(Debug, Clone)]
pub struct RunData {
    /// Density operators at the output times. Redfield-family solvers report
    /// them in the eigenbasis of the Hamiltonian; the Pauli solver reports
    /// diagonal matrices.
    pub trajectory: Option<Trajectory>,
    pub tables: Vec<(String, Table)>,
    pub spectra: Vec<Spectrum>,
}

fn rk45_options(s: &Scenario) -> Rk45Options {
    let d = Rk45Options::default();
    Rk45Options {
        rtol: s.config.solver.rtol.unwrap_or(d.rtol),
        atol: s.config.solver.atol.unwrap_or(d.atol),
        initial_step: None,
    }
}

fn relative_times(s: &Scenario) -> Vec<f64> {
    let t0 = s.times[0];
    s.times.iter().map(|t| t - t0).collect()
}

fn with_times(mut traj: Trajectory, times: &[f64]) -> Trajectory {
    traj.times = times.to_vec();
    traj
}

fn output_grid(s: &Scenario, substeps: usize) -> CliResult<TimeGrid> {
    let n = s.times.len() - 1;
    Ok(TimeGrid::new(s.times[0], s.config.times.dt() / substeps as f64, n * substeps)?)
}

fn subsample(traj: Trajectory, every: usize, times: &[f64]) -> Trajectory {
    let mut out = Trajectory::with_capacity(times.len());
    for (k, state) in traj.states.into_iter().enumerate().filter(|(k, _)| k % every == 0) {
        out.push(times[k / every], state);
    }
    out
}

/// Splits the generator into its Hamiltonian and dissipative parts.
pub fn split_generator(s: &Scenario) -> CliResult<(Liouvillian, Liouvillian)> {
    let channels = s.channels().ok_or_else(|| CliError::config("system.channels", "scenario has no Lindblad channels"))?;
    let coherent = build_liouvillian(&s.hamiltonian, &[])?;
    let dissipative = build_liouvillian(&linalg::zeros(s.dim, s.dim), channels)?;
    Ok((coherent, dissipative))
}

/// Trotter approximation at time `t` after the start with `n` steps.
pub fn trotter_state(s: &Scenario, t: f64, n: usize) -> CliResult<DensityOperator> {
    let (l1, l2) = split_generator(s)?;
    Ok(trotter_propagate(&l1, &l2, &s.initial, t, n, s.config.solver.correction)?)
}

/// `(n, t/n, ‖ρ_trotter − ρ_exact‖_max)` at the final output time.
pub fn trotter_errors(s: &Scenario, steps: &[usize]) -> CliResult<Vec<(usize, f64, f64)>> {
    let t = s.times[s.times.len() - 1] - s.times[0];
    let exact = propagate_expm(&s.liouvillian()?, &s.initial, t)?;
    steps
        .iter()
        .map(|&n| {
            let approx = trotter_state(s, t, n)?;
            Ok((n, t / n as f64, linalg::max_abs_diff(approx.matrix(), exact.matrix())))
        })
        .collect()
}

/// Propagates the scenario's initial state with `method`.
///
/// Returns `None` for the Floquet solver, whose outputs are not a state trajectory.
pub fn simulate(s: &Scenario, method: Method) -> CliResult<Option<Trajectory>> {
    let times = &s.times;
    let rel = relative_times(s);
    let solver = &s.config.solver;
    let static_only = |name: &str| -> CliResult<()> {
        if s.drives.is_empty() {
            Ok(())
        } else {
            Err(CliError::config("system.drives", format!("solver `{name}` does not support drives")))
        }
    };
    let traj = match method {
        Method::Expm => {
            static_only("expm")?;
            with_times(propagate_expm_grid(&s.liouvillian()?, &s.initial, &rel)?, times)
        }
        Method::Spectral => {
            static_only("spectral")?;
            let eps = solver.jitter.unwrap_or(DEFAULT_JITTER);
            with_times(spectral_solution_with_fallback(&s.liouvillian()?, &s.initial, &rel, eps)?, times)
        }
        Method::Semigroup => {
            static_only("semigroup")?;
            let grid = TimeGrid::new(0.0, s.config.times.dt(), times.len() - 1)?;
            with_times(semigroup_propagate(&s.liouvillian()?, &s.initial, &grid)?, times)
        }
        Method::Trotter => {
            static_only("trotter")?;
            let total = solver
                .trotter_steps
                .ok_or_else(|| CliError::config("solver.trotter_steps", "required for trotter"))?;
            let span = rel[rel.len() - 1];
            let (l1, l2) = split_generator(s)?;
            let states: CliResult<Vec<DensityOperator>> = rel
                .par_iter()
                .map(|&t| {
                    if t == 0.0 {
                        return Ok(s.initial.clone());
                    }
                    let n = ((total as f64 * t / span).round() as usize).max(1);
                    Ok(trotter_propagate(&l1, &l2, &s.initial, t, n, solver.correction)?)
                })
                .collect();
            Trajectory {
                times: times.clone(),
                states: states?,
            }
        }
        Method::Rk45 => {
            let opts = rk45_options(s);
            if s.drives.is_empty() {
                with_times(rk45_liouvillian(&s.liouvillian()?, &s.initial, &rel, &opts)?, times)
            } else {
                let g = s.generator()?;
                let rhs = |t: f64, rho: &CMatrix| {
                    let v = qme::liouville::vectorize(rho);
                    qme::liouville::devectorize(&g.matrix_at(t).dot(&v), rho.nrows()).expect("d² vector")
                };
                rk45_propagate(rhs, &s.initial, times, &opts)?
            }
        }
        Method::Piecewise => {
            let sub = solver.substeps.unwrap_or(1);
            let fine = propagate_piecewise(&s.generator()?, &s.initial, &output_grid(s, sub)?)?;
            subsample(fine, sub, times)
        }
        Method::Mcwf => {
            static_only("mcwf")?;
            let sub = solver.substeps.unwrap_or(1);
            let channels = s.channels().expect("validated").to_vec();
            let cfg = TrajectoryConfig {
                hamiltonian: s.hamiltonian.clone(),
                channels,
                dt: s.config.times.dt() / sub as f64,
                n_steps: (times.len() - 1) * sub,
                n_trajectories: solver.trajectories.unwrap_or(1),
                seed: s.seed.ok_or_else(|| CliError::config("solver.seed", "trajectory runs need a seed"))?,
            };
            let psi0 = s
                .initial_pure
                .as_ref()
                .ok_or_else(|| CliError::config("system.initial_state", "mcwf needs a pure initial state"))?;
            let result = ensemble_average(&cfg, psi0)?;
            subsample(result.mean_state, sub, times)
        }
        Method::BlochRedfield => {
            let frame = eigenframe(&s.hamiltonian)?;
            let g = bloch_redfield_tensor(&s.hamiltonian, s.couplings().expect("validated"), true, solver.secular_cutoff)?;
            let rho0 = DensityOperator::from_matrix_unchecked(frame.to_eigenbasis(s.initial.matrix()));
            with_times(propagate_expm_grid(&g, &rho0, &rel)?, times)
        }
        Method::Pauli => {
            let probs = pauli_trajectory(s)?;
            let mut out = Trajectory::with_capacity(times.len());
            for (&t, p) in times.iter().zip(probs) {
                let diag: Vec<_> = p.iter().map(|&x| linalg::re(x)).collect();
                out.push(t, DensityOperator::from_matrix_unchecked(linalg::diag(&diag)));
            }
            out
        }
        Method::Floquet => return Ok(None),
    };
    Ok(Some(traj))
}

/// Pauli master-equation probabilities in the eigenbasis at the output times.
pub fn pauli_trajectory(s: &Scenario) -> CliResult<Vec<Vec<f64>>> {
    let couplings = s.couplings().ok_or_else(|| CliError::config("system.couplings", "scenario has no bath couplings"))?;
    let frame = eigenframe(&s.hamiltonian)?;
    let rho0 = frame.to_eigenbasis(s.initial.matrix());
    // Basis rotation leaves round-off of order 1e-17 below zero.
    let mut p0: Vec<f64> = (0..s.dim).map(|k| rho0[[k, k]].re).collect();
    if p0.iter().all(|&p| p > -1e-12) {
        p0.iter_mut().for_each(|p| *p = p.max(0.0));
        let total: f64 = p0.iter().sum();
        p0.iter_mut().for_each(|p| *p /= total);
    }
    let w = pauli_rates(&s.hamiltonian, couplings)?;
    Ok(pauli_propagate(&w, &p0, &relative_times(s))?)
}

fn pair_labels(d: usize, prefix: &str) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            out.push(format!("{prefix}_{i}{j}"));
        }
    }
    out
}

/// `t, p_0.., re_rho_ij.., im_rho_ij..` with `i < j`.
pub fn populations_table(traj: &Trajectory, d: usize) -> Table {
    let mut header = vec!["t".to_string()];
    header.extend((0..d).map(|k| format!("p_{k}")));
    header.extend(pair_labels(d, "re_rho"));
    header.extend(pair_labels(d, "im_rho"));
    let mut table = Table::new(header);
    for (t, state) in traj.iter() {
        let m = state.matrix();
        let mut row = vec![t];
        row.extend((0..d).map(|k| m[[k, k]].re));
        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
        row.extend(pairs.iter().map(|&(i, j)| m[[i, j]].re));
        row.extend(pairs.iter().map(|&(i, j)| m[[i, j]].im));
        table.rows.push(row);
    }
    table
}

fn tau_grid(l: &Liouvillian, taus: Option<&TauConfig>) -> CliResult<TimeGrid> {
    Ok(match taus {
        Some(t) => TimeGrid::span(t.t1, t.points - 1)?,
        None => correlations::default_tau_grid(l)?,
    })
}

fn series_table(series: &CorrelationSeries) -> Table {
    let mut table = Table::new(vec!["tau".into(), "re".into(), "im".into()]);
    for (&tau, c) in series.taus().iter().zip(series.values()) {
        table.rows.push(vec![tau, c.re, c.im]);
    }
    table
}

fn spectrum_table(spec: &Spectrum) -> Table {
    let mut table = Table::new(vec!["omega".into(), "s".into()]);
    for (&w, &v) in spec.omegas.iter().zip(&spec.values) {
        table.rows.push(vec![w, v]);
    }
    table
}

/// Time-averaged `P̄_{α→β}` at each frequency of the sweep.
pub fn floquet_sweep(s: &Scenario, alpha: usize, beta: usize) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let omegas = s
        .floquet_setup()
        .and_then(|f| f.sweep.clone())
        .ok_or_else(|| CliError::config("system.floquet.sweep", "required"))?;
    let values: CliResult<Vec<f64>> = omegas
        .par_iter()
        .map(|&w| Ok(floquet::time_averaged_probability(&s.floquet_problem(w)?, alpha, beta)?))
        .collect();
    Ok((omegas, values?))
}

/// Folded quasi-energies from `H_F` and from the one-period propagator at the configured frequency.
pub fn floquet_dual_route(s: &Scenario) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let setup = s.floquet_setup().ok_or_else(|| CliError::config("system.floquet", "required"))?;
    let omega = setup.omega.ok_or_else(|| CliError::config("system.floquet.omega", "required"))?;
    let p = s.floquet_problem(omega)?;
    let hf = floquet::quasi_energies_hf(&p)?.quasi_energies;
    let steps = setup.steps_per_period.unwrap_or(floquet::PERIOD_STEPS);
    let prop = floquet::quasi_energies_propagator_steps(&p, steps)?;
    Ok((hf, prop))
}

fn trajectory_for<'a>(traj: &'a Option<Trajectory>, key: &str) -> CliResult<&'a Trajectory> {
    traj.as_ref().ok_or_else(|| CliError::config(key, "output needs a state trajectory"))
}

/// Operator expressed in the basis the trajectory is reported in.
fn in_trajectory_basis(s: &Scenario, op: CMatrix) -> CliResult<CMatrix> {
    Ok(if s.method() == Method::BlochRedfield {
        eigenframe(&s.hamiltonian)?.to_eigenbasis(&op)
    } else {
        op
    })
}

/// Runs the scenario with its configured solver and evaluates every output.
pub fn execute(s: &Scenario) -> CliResult<RunData> {
    let d = s.dim;
    let trajectory = simulate(s, s.method())?;
    let mut tables = Vec::new();
    let mut spectra = Vec::new();
    for (i, out) in s.config.outputs.iter().enumerate() {
        let key = format!("outputs[{i}]");
        let table = match out {
            OutputConfig::Populations { .. } => populations_table(trajectory_for(&trajectory, &key)?, d),
            OutputConfig::Coherences { .. } => {
                let traj = trajectory_for(&trajectory, &key)?;
                let mut header = vec!["t".to_string()];
                header.extend(pair_labels(d, "abs_rho"));
                let mut table = Table::new(header);
                for (t, state) in traj.iter() {
                    let m = state.matrix();
                    let mut row = vec![t];
                    row.extend((0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).map(|(i, j)| m[[i, j]].norm()));
                    table.rows.push(row);
                }
                table
            }
            OutputConfig::Expectation { observable, .. } => {
                let traj = trajectory_for(&trajectory, &key)?;
                let a = in_trajectory_basis(s, builders::operator(observable, d, &key)?)?;
                let mut table = Table::new(vec!["t".into(), "re".into(), "im".into()]);
                for (t, state) in traj.iter() {
                    let v = linalg::trace(&a.dot(state.matrix()));
                    table.rows.push(vec![t, v.re, v.im]);
                }
                table
            }
            OutputConfig::Purity { subsystem, .. } => {
                let traj = trajectory_for(&trajectory, &key)?;
                let mut table = Table::new(vec!["t".into(), "purity".into()]);
                for (t, state) in traj.iter() {
                    let p = match subsystem {
                        Some(r) => {
                            let keep = if r.keep == 0 { Subsystem::First } else { Subsystem::Second };
                            purity(&partial_trace(state, (r.dims[0], r.dims[1]), keep)?)
                        }
                        None => purity(state),
                    };
                    table.rows.push(vec![t, p]);
                }
                table
            }
            OutputConfig::Correlation { a, b, taus, .. } => {
                let l = s.liouvillian()?;
                let a = builders::operator(a, d, &format!("{key}.a"))?;
                let b = builders::operator(b, d, &format!("{key}.b"))?;
                series_table(&correlations::steady_correlation(&l, &a, &b, &tau_grid(&l, taus.as_ref())?)?)
            }
            OutputConfig::Spectrum {
                mode,
                operator,
                jumps,
                omegas,
                taus,
                ..
            } => {
                let l = s.liouvillian()?;
                let grid = tau_grid(&l, taus.as_ref())?;
                let ws = omegas.values();
                let spectrum = match (mode, operator) {
                    (SpectrumMode::Emission, Some(op)) => {
                        let j = builders::operator(op, d, &format!("{key}.operator"))?;
                        let series = correlations::steady_correlation(&l, &linalg::dagger(&j), &j, &grid)?;
                        correlations::emission_spectrum(&series, &ws)
                    }
                    (SpectrumMode::Emission, None) => {
                        let mut resolved = Vec::new();
                        for (k, jump) in jumps.as_deref().unwrap_or_default().iter().enumerate() {
                            resolved.push((builders::operator(&jump.operator, d, &format!("{key}.jumps[{k}].operator"))?, jump.rate));
                        }
                        correlations::multilevel_emission(&l, &resolved, &grid, &ws)?
                    }
                    (SpectrumMode::Absorption, op) => {
                        let op = op.as_ref().ok_or_else(|| CliError::config(&key, "absorption needs `operator`"))?;
                        let raising = builders::operator(op, d, &format!("{key}.operator"))?;
                        correlations::absorption_spectrum_on(&l, &raising, &ws, &grid)?
                    }
                };
                let table = spectrum_table(&spectrum);
                spectra.push(spectrum);
                table
            }
            OutputConfig::QuasiEnergies { .. } => {
                let (hf, prop) = floquet_dual_route(s)?;
                let mut table = Table::new(vec!["k".into(), "hf".into(), "propagator".into()]);
                for (k, (a, b)) in hf.iter().zip(&prop).enumerate() {
                    table.rows.push(vec![k as f64, *a, *b]);
                }
                table
            }
            OutputConfig::TransitionProbability { alpha, beta, averaged, .. } => {
                if *averaged {
                    let (ws, ps) = floquet_sweep(s, *alpha, *beta)?;
                    let mut table = Table::new(vec!["omega".into(), "p_avg".into()]);
                    table.rows = ws.iter().zip(&ps).map(|(w, p)| vec![*w, *p]).collect();
                    table
                } else {
                    let omega = s.floquet_setup().and_then(|f| f.omega).expect("validated");
                    let p = s.floquet_problem(omega)?;
                    let ps = floquet::transition_probabilities(&p, *alpha, *beta, &relative_times(s))?;
                    let mut table = Table::new(vec!["t".into(), "p".into()]);
                    table.rows = s.times.iter().zip(&ps).map(|(t, p)| vec![*t, *p]).collect();
                    table
                }
            }
            OutputConfig::PauliPopulations { .. } => {
                let mut header = vec!["t".to_string()];
                header.extend((0..d).map(|k| format!("p_{k}")));
                let mut table = Table::new(header);
                for (t, p) in s.times.iter().zip(pauli_trajectory(s)?) {
                    let mut row = vec![*t];
                    row.extend(p);
                    table.rows.push(row);
                }
                table
            }
            OutputConfig::TrotterConvergence { steps, .. } => {
                let mut table = Table::new(vec!["n".into(), "dt".into(), "error".into()]);
                for (n, dt, err) in trotter_errors(s, steps)? {
                    table.rows.push(vec![n as f64, dt, err]);
                }
                table
            }
        };
        tables.push((out.path().to_string(), table));
    }
    Ok(RunData {
        trajectory,
        tables,
        spectra,
    })
}
