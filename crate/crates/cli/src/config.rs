//! JSON scenario schema.
//!
//! Complex numbers are `[re, im]` pairs (a bare number is read as real);
//! matrices are row-major nested arrays. Operators may also be given by name
//! (`"sigma_x"`, `"ket_bra(0,1)"`, ...), scaled, or summed.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexIn {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexIn {
    pub fn value(&self) -> qme::C64 {
        match *self {
            ComplexIn::Real(x) => qme::C64::new(x, 0.0),
            ComplexIn::Pair([re, im]) => qme::C64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorSpec {
    Named(String),
    Matrix(Vec<Vec<ComplexIn>>),
    Scaled { scale: ComplexIn, operator: Box<OperatorSpec> },
    Sum { sum: Vec<OperatorSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HamiltonianSpec {
    Builder {
        builder: String,
        #[serde(flatten)]
        params: Map<String, Value>,
    },
    Operator(OperatorSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// Basis vector `|k⟩`.
    Basis(usize),
    /// `k`-th eigenstate of the Hamiltonian, ascending in energy.
    Eigenstate(usize),
    /// Pure state amplitudes, normalized on load.
    Pure(Vec<ComplexIn>),
    Density(Vec<Vec<ComplexIn>>),
    /// Column-stacked density vector.
    Vectorized(Vec<ComplexIn>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub operator: OperatorSpec,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumConfig {
    Ohmic { eta: f64, omega_c: f64, beta: f64 },
    Tabulated { points: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub operator: OperatorSpec,
    pub spectrum: SpectrumConfig,
}

/// A Hamiltonian term `amplitude · cos(frequency·t + phase) · operator`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    pub operator: OperatorSpec,
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl RangeConfig {
    pub fn values(&self) -> Vec<f64> {
        linspace(self.min, self.max, self.points)
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points.max(2) - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloquetConfig {
    /// Drive frequency; ignored when `sweep` is present.
    #[serde(default)]
    pub omega: Option<f64>,
    /// Coefficient of `e^{−iωt}`; taken from the builder when omitted.
    #[serde(default)]
    pub h_plus: Option<OperatorSpec>,
    /// Coefficient of `e^{iωt}`; defaults to `h_plus†`.
    #[serde(default)]
    pub h_minus: Option<OperatorSpec>,
    /// Fixed truncation order; converged automatically when omitted.
    #[serde(default)]
    pub harmonics: Option<usize>,
    /// Express the problem in the eigenbasis of `H₀` (default true).
    #[serde(default = "yes")]
    pub eigenbasis: bool,
    #[serde(default)]
    pub sweep: Option<RangeConfig>,
    #[serde(default)]
    pub steps_per_period: Option<usize>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub dimension: usize,
    pub hamiltonian: HamiltonianSpec,
    #[serde(default)]
    pub initial_state: Option<InitialState>,
    #[serde(default)]
    pub channels: Option<Vec<ChannelConfig>>,
    #[serde(default)]
    pub couplings: Option<Vec<CouplingConfig>>,
    #[serde(default)]
    pub floquet: Option<FloquetConfig>,
    #[serde(default)]
    pub drives: Vec<DriveConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Expm,
    Spectral,
    Semigroup,
    Trotter,
    Rk45,
    Piecewise,
    Mcwf,
    BlochRedfield,
    Pauli,
    Floquet,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Expm => "expm",
            Method::Spectral => "spectral",
            Method::Semigroup => "semigroup",
            Method::Trotter => "trotter",
            Method::Rk45 => "rk45",
            Method::Piecewise => "piecewise",
            Method::Mcwf => "mcwf",
            Method::BlochRedfield => "bloch_redfield",
            Method::Pauli => "pauli",
            Method::Floquet => "floquet",
        }
    }

    /// Solvers driven by Lindblad channels.
    pub fn is_lindblad(&self) -> bool {
        matches!(
            self,
            Method::Expm | Method::Spectral | Method::Semigroup | Method::Trotter | Method::Rk45 | Method::Piecewise | Method::Mcwf
        )
    }

    pub fn is_redfield(&self) -> bool {
        matches!(self, Method::BlochRedfield | Method::Pauli)
    }

    /// Deterministic Lindblad solvers that do not need time-dependent drives.
    pub const STATIC_LINDBLAD: [Method; 5] = [Method::Expm, Method::Spectral, Method::Semigroup, Method::Trotter, Method::Rk45];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Method,
    #[serde(default)]
    pub rtol: Option<f64>,
    #[serde(default)]
    pub atol: Option<f64>,
    /// Trotter steps over the whole interval `[t0, t1]`.
    #[serde(default)]
    pub trotter_steps: Option<usize>,
    #[serde(default)]
    pub correction: bool,
    /// Integration steps per output interval (piecewise, mcwf).
    #[serde(default)]
    pub substeps: Option<usize>,
    #[serde(default)]
    pub trajectories: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub secular_cutoff: Option<f64>,
    #[serde(default)]
    pub jitter: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimesConfig {
    #[serde(default)]
    pub t0: f64,
    pub t1: f64,
    pub points: usize,
}

impl TimesConfig {
    pub fn values(&self) -> Vec<f64> {
        linspace(self.t0, self.t1, self.points)
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / (self.points - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceConfig {
    pub dims: [usize; 2],
    /// Index of the subsystem kept (0 or 1).
    pub keep: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauConfig {
    pub t1: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMode {
    #[default]
    Emission,
    Absorption,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpConfig {
    pub operator: OperatorSpec,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OutputConfig {
    /// `t, p_0.., re_rho_ij.., im_rho_ij..` for `i < j`.
    Populations { path: String },
    /// `t, abs_rho_ij..` for `i < j`.
    Coherences { path: String },
    Expectation { path: String, observable: OperatorSpec },
    Purity {
        path: String,
        #[serde(default)]
        subsystem: Option<ReduceConfig>,
    },
    /// Steady-state `⟨A(τ)B(0)⟩`.
    Correlation {
        path: String,
        a: OperatorSpec,
        b: OperatorSpec,
        #[serde(default)]
        taus: Option<TauConfig>,
    },
    /// Emission spectrum of `⟨J†(τ)J(0)⟩` for the transition operator `J`
    /// (or a sum over `jumps`), or the absorption spectrum of the raising
    /// operator `J`.
    Spectrum {
        path: String,
        #[serde(default)]
        mode: SpectrumMode,
        #[serde(default)]
        operator: Option<OperatorSpec>,
        #[serde(default)]
        jumps: Option<Vec<JumpConfig>>,
        omegas: RangeConfig,
        #[serde(default)]
        taus: Option<TauConfig>,
    },
    QuasiEnergies { path: String },
    TransitionProbability {
        path: String,
        alpha: usize,
        beta: usize,
        #[serde(default)]
        averaged: bool,
    },
    /// Pauli master-equation populations next to a Bloch-Redfield run.
    PauliPopulations { path: String },
    /// Endpoint error against the exact propagator for several step counts.
    TrotterConvergence { path: String, steps: Vec<usize> },
}

impl OutputConfig {
    pub fn path(&self) -> &str {
        match self {
            OutputConfig::Populations { path }
            | OutputConfig::Coherences { path }
            | OutputConfig::Expectation { path, .. }
            | OutputConfig::Purity { path, .. }
            | OutputConfig::Correlation { path, .. }
            | OutputConfig::Spectrum { path, .. }
            | OutputConfig::QuasiEnergies { path }
            | OutputConfig::TransitionProbability { path, .. }
            | OutputConfig::PauliPopulations { path }
            | OutputConfig::TrotterConvergence { path, .. } => path,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckConfig {
    /// Marginal purity equals `cos⁴t + sin⁴t`.
    PurityCurve { tol: f64 },
    /// Final populations equal `expected`.
    FinalPopulations { expected: Vec<f64>, tol: f64 },
    /// Listed solvers agree pairwise on every population.
    MethodAgreement { methods: Vec<Method>, tol: f64 },
    /// Piecewise propagation stays within `tol` of rk45 and converges at first order.
    PiecewiseConvergence { tol: f64 },
    /// Repeated one-step propagation matches direct exponentiation.
    SemigroupLaw { tol: f64 },
    /// Trotter endpoint error falls with `steps` at log-log slope in `[slope_min, slope_max]`.
    TrotterConvergence { steps: Vec<usize>, slope_min: f64, slope_max: f64 },
    /// Trajectory average within `tol` of the exact populations.
    McwfAccuracy { tol: f64 },
    /// Spectrum maxima sit at Bohr frequencies of the Hamiltonian.
    SpectrumPeaks {},
    /// Pauli and Bloch-Redfield populations agree.
    PauliAgreement { tol: f64, simplex_tol: f64 },
    /// Quasi-energy routes agree and the averaged transition probability peaks at n-photon resonances.
    FloquetResonances { dual_route_tol: f64, photons: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub system: SystemConfig,
    pub solver: SolverConfig,
    pub times: TimesConfig,
    #[serde(default)]
    pub outputs: Vec<OutputConfig>,
    #[serde(default)]
    pub check: Option<CheckConfig>,
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Parses a scenario document, reporting the JSON path of the first error.
pub fn parse(text: &str) -> CliResult<ScenarioConfig> {
    let value: Value = serde_json::from_str(text).map_err(|e| CliError::config("<document>", e.to_string()))?;
    serde_json::from_value(value.clone()).map_err(|e| CliError::config(locate(&value, &e.to_string()), e.to_string()))
}

/// Best-effort location of a serde error: the first top-level section that
/// fails to deserialize on its own, refined to the offending list element.
fn locate(value: &Value, message: &str) -> String {
    if let Some(start) = message.find('`') {
        if let Some(len) = message[start + 1..].find('`') {
            let field = &message[start + 1..start + 1 + len];
            if let Some(path) = find_key(value, field, String::new()) {
                return path;
            }
            return field.to_string();
        }
    }
    "<document>".to_string()
}

fn find_key(value: &Value, key: &str, prefix: String) -> Option<String> {
    match value {
        Value::Object(map) => {
            if map.contains_key(key) {
                return Some(join(&prefix, key));
            }
            map.iter().find_map(|(k, v)| find_key(v, key, join(&prefix, k)))
        }
        Value::Array(items) => items
            .iter()
            .enumerate()
            .find_map(|(i, v)| find_key(v, key, format!("{prefix}[{i}]"))),
        _ => None,
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}
