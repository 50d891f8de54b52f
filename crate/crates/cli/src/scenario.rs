//! Validated, matrix-level form of a scenario.

use qme::floquet::FloquetProblem;
use qme::linalg::{self, CMatrix, C64};
use qme::liouville::{build_liouvillian, hamiltonian_superoperator, LindbladChannel, Liouvillian};
use qme::operators::{DensityOperator, PureState};
use qme::propagation::TimeDependentGenerator;
use qme::redfield::{eigenframe, CouplingSpec, NoiseSpectrum};

use crate::builders::{self, Built};
use crate::config::{
    CheckConfig, ComplexIn, HamiltonianSpec, InitialState, Method, OperatorSpec, OutputConfig, ScenarioConfig, SpectrumConfig,
    SpectrumMode,
};
use crate::error::{CliError, CliResult};

const HERMITICITY_TOL: f64 = 1e-10;
const STATE_TOL: f64 = 1e-8;

/// Time-dependent Hamiltonian term `amplitude · cos(frequency·t + phase) · operator`.
#[derive(Debug, Clone)]
pub struct Drive {
    pub operator: CMatrix,
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl Drive {
    pub fn coefficient(&self, t: f64) -> f64 {
        self.amplitude * (self.frequency * t + self.phase).cos()
    }
}

#[derive(Debug, Clone)]
pub struct FloquetSetup {
    pub h_plus: CMatrix,
    pub h_minus: CMatrix,
    pub omega: Option<f64>,
    pub sweep: Option<Vec<f64>>,
    pub harmonics: Option<usize>,
    pub eigenbasis: bool,
    pub steps_per_period: Option<usize>,
}

#[derive(Debug, Clone)]
pub enum Dynamics {
    Lindblad(Vec<LindbladChannel>),
    Redfield(Vec<CouplingSpec>),
    Floquet(FloquetSetup),
}

/// A scenario with every operator resolved to a matrix.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub dim: usize,
    pub hamiltonian: CMatrix,
    pub initial: DensityOperator,
    /// Set when the initial state is pure; required by trajectory runs.
    pub initial_pure: Option<PureState>,
    pub dynamics: Dynamics,
    pub drives: Vec<Drive>,
    pub times: Vec<f64>,
    /// Effective seed after command-line overrides.
    pub seed: Option<u64>,
}

impl Scenario {
    pub fn method(&self) -> Method {
        self.config.solver.method
    }

    pub fn channels(&self) -> Option<&[LindbladChannel]> {
        match &self.dynamics {
            Dynamics::Lindblad(ch) => Some(ch),
            _ => None,
        }
    }

    pub fn couplings(&self) -> Option<&[CouplingSpec]> {
        match &self.dynamics {
            Dynamics::Redfield(c) => Some(c),
            _ => None,
        }
    }

    /// Time-independent part of the Lindblad generator.
    pub fn liouvillian(&self) -> CliResult<Liouvillian> {
        let channels = self.channels().ok_or_else(|| CliError::config("system.channels", "scenario has no Lindblad channels"))?;
        Ok(build_liouvillian(&self.hamiltonian, channels)?)
    }

    /// `L(t) = L₀ + Σ_k c_k(t) L_k` with the drives as Hamiltonian terms.
    pub fn generator(&self) -> CliResult<TimeDependentGenerator> {
        let mut g = TimeDependentGenerator::new(self.liouvillian()?);
        for drive in &self.drives {
            let part = Liouvillian::from_matrix(hamiltonian_superoperator(&drive.operator))?;
            let d = drive.clone();
            g = g.with_drive(part, std::sync::Arc::new(move |t: f64| d.coefficient(t)))?;
        }
        Ok(g)
    }

    /// Floquet problem at drive frequency `omega`, before truncation is fixed.
    pub fn floquet_problem(&self, omega: f64) -> CliResult<FloquetProblem> {
        let Dynamics::Floquet(setup) = &self.dynamics else {
            return Err(CliError::config("system.floquet", "scenario has no floquet block"));
        };
        // The cavity builder folds ω into H₀, so it is rebuilt for each frequency.
        let (h0, h_plus, h_minus) = match &self.config.system.hamiltonian {
            HamiltonianSpec::Builder { builder, params } if builder == "floquet_cavity" => {
                let built = builders::build(builder, params, "system.hamiltonian", Some(omega))?;
                let (hp, hm) = built.drive.expect("cavity builder defines a drive");
                (built.hamiltonian, hp, hm)
            }
            _ => (self.hamiltonian.clone(), setup.h_plus.clone(), setup.h_minus.clone()),
        };
        let n = setup.harmonics.unwrap_or(qme::floquet::START_HARMONICS);
        let mut p = FloquetProblem::new(h0, h_plus, h_minus, omega, n)?;
        if setup.eigenbasis {
            p = p.in_eigenbasis()?;
        }
        if setup.harmonics.is_none() {
            p = qme::floquet::converge_truncation(&p)?;
        }
        Ok(p)
    }

    pub fn floquet_setup(&self) -> Option<&FloquetSetup> {
        match &self.dynamics {
            Dynamics::Floquet(s) => Some(s),
            _ => None,
        }
    }

    /// Same scenario driven by a different solver, if the dynamics allow it.
    pub fn with_method(&self, method: Method) -> CliResult<Scenario> {
        let mut config = self.config.clone();
        config.solver.method = method;
        if method == Method::Mcwf && config.solver.seed.is_none() {
            config.solver.seed = self.seed;
        }
        let mut s = resolve(config, None)?;
        s.seed = self.seed.or(s.seed);
        Ok(s)
    }
}

fn complex_vector(values: &[ComplexIn]) -> Vec<C64> {
    values.iter().map(ComplexIn::value).collect()
}

fn noise_spectrum(spec: &SpectrumConfig, key: &str) -> CliResult<NoiseSpectrum> {
    let r = match spec {
        SpectrumConfig::Ohmic { eta, omega_c, beta } => NoiseSpectrum::ohmic(*eta, *omega_c, *beta),
        SpectrumConfig::Tabulated { points } => NoiseSpectrum::tabulated(points.iter().map(|p| (p[0], p[1])).collect()),
    };
    r.map_err(|e| CliError::config(key, e.to_string()))
}

fn initial_state(spec: &InitialState, h: &CMatrix, d: usize) -> CliResult<(DensityOperator, Option<PureState>)> {
    let key = "system.initial_state";
    let pure = |amps: Vec<C64>| -> CliResult<(DensityOperator, Option<PureState>)> {
        if amps.len() != d {
            return Err(CliError::config(key, format!("expected {d} amplitudes, got {}", amps.len())));
        }
        let psi = PureState::normalized(ndarray::Array1::from(amps)).map_err(|e| CliError::config(key, e.to_string()))?;
        Ok((psi.to_density(), Some(psi)))
    };
    match spec {
        InitialState::Basis(k) => {
            if *k >= d {
                return Err(CliError::config(format!("{key}.basis"), format!("index {k} out of range for dimension {d}")));
            }
            let psi = PureState::basis(d, *k);
            Ok((psi.to_density(), Some(psi)))
        }
        InitialState::Eigenstate(k) => {
            if *k >= d {
                return Err(CliError::config(format!("{key}.eigenstate"), format!("index {k} out of range for dimension {d}")));
            }
            let frame = eigenframe(h).map_err(|e| CliError::config(key, e.to_string()))?;
            pure(frame.vectors.column(*k).to_vec())
        }
        InitialState::Pure(amps) => pure(complex_vector(amps)),
        InitialState::Density(rows) => {
            let m = builders::matrix(rows, d, &format!("{key}.density"))?;
            density(m, &format!("{key}.density"))
        }
        InitialState::Vectorized(v) => {
            if v.len() != d * d {
                return Err(CliError::config(format!("{key}.vectorized"), format!("expected {} entries", d * d)));
            }
            let vec = ndarray::Array1::from(complex_vector(v));
            let m = qme::liouville::devectorize(&vec, d)?;
            density(m, &format!("{key}.vectorized"))
        }
    }
}

fn density(m: CMatrix, key: &str) -> CliResult<(DensityOperator, Option<PureState>)> {
    let score = qme::operators::state_score(&m).map_err(|e| CliError::config(key, e.to_string()))?;
    if score.trace_dev > STATE_TOL || score.herm_dev > STATE_TOL || score.pos_dev > STATE_TOL {
        return Err(CliError::config(key, "not a density operator (needs unit trace, Hermitian, positive)"));
    }
    Ok((DensityOperator::from_matrix_unchecked(m), None))
}

fn operator_at(spec: &OperatorSpec, d: usize, key: &str) -> CliResult<CMatrix> {
    builders::operator(spec, d, key)
}

/// Checks the scenario invariants and resolves every operator.
///
/// `seed_override` replaces `solver.seed`, as `--seed` does.
pub fn resolve(config: ScenarioConfig, seed_override: Option<u64>) -> CliResult<Scenario> {
    let sys = &config.system;
    let d = sys.dimension;
    if d == 0 {
        return Err(CliError::config("system.dimension", "must be at least 1"));
    }
    let method = config.solver.method;
    let floquet_omega = sys.floquet.as_ref().and_then(|f| f.omega.or(f.sweep.map(|s| s.min)));

    let built = match &sys.hamiltonian {
        HamiltonianSpec::Builder { builder, params } => builders::build(builder, params, "system.hamiltonian", floquet_omega)?,
        HamiltonianSpec::Operator(spec) => Built {
            hamiltonian: operator_at(spec, d, "system.hamiltonian")?,
            drive: None,
        },
    };
    let h = built.hamiltonian;
    if h.nrows() != d {
        return Err(CliError::config(
            "system.dimension",
            format!("hamiltonian has dimension {}, declared {d}", h.nrows()),
        ));
    }
    let dev = linalg::hermiticity_deviation(&h);
    if dev > HERMITICITY_TOL {
        return Err(CliError::config("system.hamiltonian", format!("not Hermitian (deviation {dev:.3e})")));
    }

    // Exactly one dynamics block, matching the solver family.
    let present: Vec<&str> = [
        sys.channels.as_ref().map(|_| "channels"),
        sys.couplings.as_ref().map(|_| "couplings"),
        sys.floquet.as_ref().map(|_| "floquet"),
    ]
    .into_iter()
    .flatten()
    .collect();
    if present.len() != 1 {
        return Err(CliError::config(
            "system",
            format!("exactly one of channels/couplings/floquet is required, found [{}]", present.join(", ")),
        ));
    }
    let wanted = if method.is_lindblad() {
        "channels"
    } else if method.is_redfield() {
        "couplings"
    } else {
        "floquet"
    };
    if present[0] != wanted {
        return Err(CliError::config(
            format!("system.{}", present[0]),
            format!("solver `{}` needs `system.{wanted}`", method.name()),
        ));
    }

    let dynamics = if let Some(chs) = &sys.channels {
        let mut out = Vec::with_capacity(chs.len());
        for (i, ch) in chs.iter().enumerate() {
            let label = ch.name.clone().unwrap_or_else(|| format!("#{i}"));
            let key = format!("system.channels[{i}]");
            if !(ch.rate >= 0.0) || !ch.rate.is_finite() {
                return Err(CliError::config(
                    format!("{key}.rate"),
                    format!("channel `{label}` has rate {} (must be finite and >= 0)", ch.rate),
                ));
            }
            let op = operator_at(&ch.operator, d, &format!("{key}.operator"))?;
            out.push(LindbladChannel::new(op, ch.rate).map_err(|e| CliError::config(&key, e.to_string()))?);
        }
        Dynamics::Lindblad(out)
    } else if let Some(cs) = &sys.couplings {
        let mut out = Vec::with_capacity(cs.len());
        for (i, c) in cs.iter().enumerate() {
            let key = format!("system.couplings[{i}]");
            let op = operator_at(&c.operator, d, &format!("{key}.operator"))?;
            let s = noise_spectrum(&c.spectrum, &format!("{key}.spectrum"))?;
            out.push(CouplingSpec::new(op, s).map_err(|e| CliError::config(format!("{key}.operator"), e.to_string()))?);
        }
        Dynamics::Redfield(out)
    } else {
        let f = sys.floquet.as_ref().expect("one block present");
        let key = "system.floquet";
        let h_plus = match (&f.h_plus, &built.drive) {
            (Some(spec), _) => operator_at(spec, d, &format!("{key}.h_plus"))?,
            (None, Some((hp, _))) => hp.clone(),
            (None, None) => return Err(CliError::config(format!("{key}.h_plus"), "required unless the builder defines a drive")),
        };
        let h_minus = match (&f.h_minus, &built.drive, &f.h_plus) {
            (Some(spec), _, _) => operator_at(spec, d, &format!("{key}.h_minus"))?,
            (None, Some((_, hm)), None) => hm.clone(),
            _ => linalg::dagger(&h_plus),
        };
        if f.omega.is_none() && f.sweep.is_none() {
            return Err(CliError::config(format!("{key}.omega"), "give a drive frequency or a sweep"));
        }
        if let Some(w) = f.omega {
            if !(w > 0.0) {
                return Err(CliError::config(format!("{key}.omega"), "must be positive"));
            }
        }
        if let Some(s) = f.sweep {
            if !(s.min > 0.0) || !(s.max > s.min) || s.points < 2 {
                return Err(CliError::config(format!("{key}.sweep"), "need 0 < min < max and at least 2 points"));
            }
        }
        if f.steps_per_period == Some(0) {
            return Err(CliError::config(format!("{key}.steps_per_period"), "must be positive"));
        }
        let setup = FloquetSetup {
            h_plus,
            h_minus,
            omega: f.omega,
            sweep: f.sweep.map(|s| s.values()),
            harmonics: f.harmonics,
            eigenbasis: f.eigenbasis,
            steps_per_period: f.steps_per_period,
        };
        let probe = FloquetProblem::new(h.clone(), setup.h_plus.clone(), setup.h_minus.clone(), floquet_omega.unwrap_or(1.0), 1);
        probe.map_err(|e| CliError::config(key, e.to_string()))?;
        Dynamics::Floquet(setup)
    };

    let mut drives = Vec::with_capacity(sys.drives.len());
    for (i, dr) in sys.drives.iter().enumerate() {
        let key = format!("system.drives[{i}]");
        if !matches!(method, Method::Piecewise | Method::Rk45) {
            return Err(CliError::config(&key, format!("solver `{}` does not support drives", method.name())));
        }
        let op = operator_at(&dr.operator, d, &format!("{key}.operator"))?;
        if linalg::hermiticity_deviation(&op) > HERMITICITY_TOL {
            return Err(CliError::config(format!("{key}.operator"), "drive operator must be Hermitian"));
        }
        if ![dr.amplitude, dr.frequency, dr.phase].iter().all(|x| x.is_finite()) {
            return Err(CliError::config(&key, "non-finite drive parameter"));
        }
        drives.push(Drive {
            operator: op,
            amplitude: dr.amplitude,
            frequency: dr.frequency,
            phase: dr.phase,
        });
    }

    let (initial, initial_pure) = match &sys.initial_state {
        Some(spec) => initial_state(spec, &h, d)?,
        None => {
            let psi = PureState::basis(d, 0);
            (psi.to_density(), Some(psi))
        }
    };

    let times = &config.times;
    if times.points < 2 || !(times.t1 > times.t0) || !times.t0.is_finite() || !times.t1.is_finite() {
        return Err(CliError::config("times", "need t1 > t0 and at least 2 points"));
    }

    let solver = &config.solver;
    let seed = seed_override.or(solver.seed);
    for (name, v) in [("rtol", solver.rtol), ("atol", solver.atol), ("jitter", solver.jitter), ("secular_cutoff", solver.secular_cutoff)] {
        if let Some(x) = v {
            if !(x > 0.0) || !x.is_finite() {
                return Err(CliError::config(format!("solver.{name}"), "must be positive"));
            }
        }
    }
    for (name, v) in [("trotter_steps", solver.trotter_steps), ("substeps", solver.substeps), ("trajectories", solver.trajectories)] {
        if v == Some(0) {
            return Err(CliError::config(format!("solver.{name}"), "must be at least 1"));
        }
    }
    match method {
        Method::Mcwf => {
            if seed.is_none() {
                return Err(CliError::config("solver.seed", "trajectory runs need a seed (set solver.seed or pass --seed)"));
            }
            if solver.trajectories.is_none() {
                return Err(CliError::config("solver.trajectories", "required for mcwf"));
            }
            if initial_pure.is_none() {
                return Err(CliError::config("system.initial_state", "mcwf needs a pure initial state"));
            }
        }
        Method::Trotter if solver.trotter_steps.is_none() => {
            return Err(CliError::config("solver.trotter_steps", "required for trotter"));
        }
        _ => {}
    }

    let scenario = Scenario {
        dim: d,
        hamiltonian: h,
        initial,
        initial_pure,
        dynamics,
        drives,
        times: times.values(),
        seed,
        config,
    };
    validate_outputs(&scenario)?;
    validate_check(&scenario)?;
    Ok(scenario)
}

fn validate_outputs(s: &Scenario) -> CliResult<()> {
    let d = s.dim;
    let method = s.method();
    let floquet = s.floquet_setup();
    let mut paths = std::collections::HashSet::new();
    for (i, out) in s.config.outputs.iter().enumerate() {
        let key = format!("outputs[{i}]");
        let path = out.path();
        if path.is_empty() || std::path::Path::new(path).is_absolute() || path.split(['/', '\\']).any(|c| c == "..") {
            return Err(CliError::config(format!("{key}.path"), "must be a relative path inside the output directory"));
        }
        if path == "manifest.json" || !paths.insert(path.to_string()) {
            return Err(CliError::config(format!("{key}.path"), format!("duplicate or reserved path `{path}`")));
        }
        let needs = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(CliError::config(&key, format!("output kind needs {what} (solver is `{}`)", method.name())))
            }
        };
        match out {
            OutputConfig::Populations { .. } | OutputConfig::Coherences { .. } => needs(method != Method::Floquet, "a state trajectory")?,
            OutputConfig::Expectation { observable, .. } => {
                needs(method != Method::Floquet && method != Method::Pauli, "a density-operator trajectory")?;
                operator_at(observable, d, &format!("{key}.observable"))?;
            }
            OutputConfig::Purity { subsystem, .. } => {
                needs(method != Method::Floquet && method != Method::Pauli, "a density-operator trajectory")?;
                if let Some(r) = subsystem {
                    if r.dims[0] * r.dims[1] != d || r.keep > 1 {
                        return Err(CliError::config(
                            format!("{key}.subsystem"),
                            format!("dims must multiply to {d} and keep must be 0 or 1"),
                        ));
                    }
                }
            }
            OutputConfig::Correlation { a, b, taus, .. } => {
                needs(method.is_lindblad(), "Lindblad channels")?;
                operator_at(a, d, &format!("{key}.a"))?;
                operator_at(b, d, &format!("{key}.b"))?;
                check_taus(taus.as_ref(), &key)?;
            }
            OutputConfig::Spectrum {
                mode,
                operator,
                jumps,
                omegas,
                taus,
                ..
            } => {
                needs(method.is_lindblad(), "Lindblad channels")?;
                check_taus(taus.as_ref(), &key)?;
                if omegas.points < 2 || !(omegas.max > omegas.min) {
                    return Err(CliError::config(format!("{key}.omegas"), "need max > min and at least 2 points"));
                }
                match (operator, jumps, mode) {
                    (Some(op), None, _) => {
                        operator_at(op, d, &format!("{key}.operator"))?;
                    }
                    (None, Some(js), SpectrumMode::Emission) if !js.is_empty() => {
                        for (k, j) in js.iter().enumerate() {
                            operator_at(&j.operator, d, &format!("{key}.jumps[{k}].operator"))?;
                            if !(j.rate >= 0.0) {
                                return Err(CliError::config(format!("{key}.jumps[{k}].rate"), "must be >= 0"));
                            }
                        }
                    }
                    _ => {
                        return Err(CliError::config(
                            &key,
                            "give `operator`, or a non-empty `jumps` list for an emission spectrum",
                        ))
                    }
                }
            }
            OutputConfig::QuasiEnergies { .. } => {
                needs(floquet.is_some_and(|f| f.omega.is_some()), "a floquet block with `omega`")?;
            }
            OutputConfig::TransitionProbability { alpha, beta, averaged, .. } => {
                let f = floquet.ok_or_else(|| CliError::config(&key, "output kind needs a floquet block"))?;
                if *averaged && f.sweep.is_none() {
                    return Err(CliError::config(format!("{key}.averaged"), "averaged probabilities need `system.floquet.sweep`"));
                }
                if !*averaged && f.omega.is_none() {
                    return Err(CliError::config(&key, "time-resolved probabilities need `system.floquet.omega`"));
                }
                if *alpha >= d || *beta >= d {
                    return Err(CliError::config(&key, format!("state indices must be < {d}")));
                }
            }
            OutputConfig::PauliPopulations { .. } => needs(method == Method::BlochRedfield, "the bloch_redfield solver")?,
            OutputConfig::TrotterConvergence { steps, .. } => {
                needs(method.is_lindblad() && s.drives.is_empty(), "a time-independent Lindblad generator")?;
                if steps.is_empty() || steps.contains(&0) {
                    return Err(CliError::config(format!("{key}.steps"), "need positive step counts"));
                }
            }
        }
    }
    Ok(())
}

fn check_taus(taus: Option<&crate::config::TauConfig>, key: &str) -> CliResult<()> {
    if let Some(t) = taus {
        if t.points < 2 || !(t.t1 > 0.0) {
            return Err(CliError::config(format!("{key}.taus"), "need t1 > 0 and at least 2 points"));
        }
    }
    Ok(())
}

fn validate_check(s: &Scenario) -> CliResult<()> {
    let Some(check) = &s.config.check else {
        return Ok(());
    };
    let method = s.method();
    let key = "check";
    let fail = |msg: &str| Err(CliError::config(key, msg.to_string()));
    match check {
        CheckConfig::PurityCurve { .. } => {
            if s.dim != 4 {
                return fail("purity_curve needs a two-qubit system");
            }
        }
        CheckConfig::FinalPopulations { expected, .. } => {
            let want = if method == Method::Floquet { 0 } else { s.dim };
            if expected.len() != want {
                return fail("expected populations must match the dimension");
            }
        }
        CheckConfig::MethodAgreement { methods, .. } => {
            if methods.len() < 2 {
                return fail("method_agreement needs at least two methods");
            }
            for m in methods {
                if !Method::STATIC_LINDBLAD.contains(m) || !s.drives.is_empty() || s.channels().is_none() {
                    return fail("method_agreement compares time-independent Lindblad solvers");
                }
                if *m == Method::Trotter && s.config.solver.trotter_steps.is_none() {
                    return fail("trotter in method_agreement needs solver.trotter_steps");
                }
            }
        }
        CheckConfig::PiecewiseConvergence { .. } => {
            if method != Method::Piecewise {
                return fail("piecewise_convergence needs the piecewise solver");
            }
        }
        CheckConfig::SemigroupLaw { .. } => {
            if s.channels().is_none() || !s.drives.is_empty() {
                return fail("semigroup_law needs a time-independent Lindblad generator");
            }
        }
        CheckConfig::TrotterConvergence { steps, .. } => {
            if s.channels().is_none() || !s.drives.is_empty() {
                return fail("trotter_convergence needs a time-independent Lindblad generator");
            }
            if steps.len() < 2 || steps.contains(&0) {
                return fail("trotter_convergence needs at least two positive step counts");
            }
        }
        CheckConfig::McwfAccuracy { .. } => {
            if method != Method::Mcwf {
                return fail("mcwf_accuracy needs the mcwf solver");
            }
        }
        CheckConfig::SpectrumPeaks {} => {
            if !s.config.outputs.iter().any(|o| matches!(o, OutputConfig::Spectrum { .. })) {
                return fail("spectrum_peaks needs a spectrum output");
            }
        }
        CheckConfig::PauliAgreement { .. } => {
            if method != Method::BlochRedfield && method != Method::Pauli {
                return fail("pauli_agreement needs couplings and a Redfield-family solver");
            }
        }
        CheckConfig::FloquetResonances { photons, .. } => {
            let ok = s.floquet_setup().is_some_and(|f| f.omega.is_some() && f.sweep.is_some());
            if !ok || s.dim != 2 || photons.is_empty() || photons.contains(&0) {
                return fail("floquet_resonances needs a two-level floquet block with `omega`, `sweep` and positive photon numbers");
            }
        }
    }
    Ok(())
}
