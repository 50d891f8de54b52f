//! Named model builders and operator parsing.

use qme::linalg::{self, pauli, CMatrix, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};

use crate::config::OperatorSpec;
use crate::error::{CliError, CliResult};

/// Builder names accepted in `system.hamiltonian.builder`.
pub const BUILDERS: [&str; 6] = ["two_level", "spin_boson", "random_network", "driven_tls", "floquet_cavity", "bell_pair"];

/// Matrices produced by a builder.
#[derive(Debug, Clone)]
pub struct Built {
    pub hamiltonian: CMatrix,
    /// `(H₊₁, H₋₁)` for builders that describe a periodic drive.
    pub drive: Option<(CMatrix, CMatrix)>,
}

struct Params<'a> {
    key: String,
    map: &'a Map<String, Value>,
}

impl Params<'_> {
    fn number(&self, name: &str) -> CliResult<f64> {
        self.map
            .get(name)
            .ok_or_else(|| CliError::config(format!("{}.{name}", self.key), "missing parameter"))?
            .as_f64()
            .ok_or_else(|| CliError::config(format!("{}.{name}", self.key), "expected a number"))
    }

    fn number_or(&self, name: &str, default: f64) -> CliResult<f64> {
        if self.map.contains_key(name) {
            self.number(name)
        } else {
            Ok(default)
        }
    }

    fn integer_or(&self, name: &str, default: u64) -> CliResult<u64> {
        match self.map.get(name) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .ok_or_else(|| CliError::config(format!("{}.{name}", self.key), "expected a non-negative integer")),
        }
    }

    fn only(&self, allowed: &[&str]) -> CliResult<()> {
        for k in self.map.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(CliError::config(format!("{}.{k}", self.key), "unknown builder parameter"));
            }
        }
        Ok(())
    }
}

fn scaled(m: &CMatrix, s: f64) -> CMatrix {
    m.mapv(|z| z * s)
}

/// `δσ_z/2 + εσ_x`
fn biased_tls(delta: f64, epsilon: f64) -> CMatrix {
    scaled(&pauli::sigma_z(), 0.5 * delta) + scaled(&pauli::sigma_x(), epsilon)
}

/// Runs builder `name` with parameters `map`. `omega` is the drive frequency
/// of the surrounding Floquet problem, needed by `floquet_cavity`.
pub fn build(name: &str, map: &Map<String, Value>, key: &str, omega: Option<f64>) -> CliResult<Built> {
    let p = Params {
        key: key.to_string(),
        map,
    };
    let plain = |h: CMatrix| Built {
        hamiltonian: h,
        drive: None,
    };
    match name {
        // [[0, Ω], [Ω, Δ]]
        "two_level" => {
            p.only(&["delta", "omega"])?;
            let (delta, omega) = (p.number("delta")?, p.number("omega")?);
            Ok(plain(linalg::from_real_rows(&[&[0.0, omega], &[omega, delta]])))
        }
        // (ε/2)σ_z + (Δ/2)σ_x
        "spin_boson" => {
            p.only(&["epsilon", "delta"])?;
            let (eps, delta) = (p.number("epsilon")?, p.number("delta")?);
            Ok(plain(scaled(&pauli::sigma_z(), 0.5 * eps) + scaled(&pauli::sigma_x(), 0.5 * delta)))
        }
        // Σ ε_k|k⟩⟨k| + Σ_{j<k} (v_jk|j⟩⟨k| + h.c.) with seeded uniform draws.
        "random_network" => {
            p.only(&["sites", "seed", "energy_spread", "coupling_spread"])?;
            let sites = p.integer_or("sites", 5)? as usize;
            if sites < 2 {
                return Err(CliError::config(format!("{key}.sites"), "need at least two sites"));
            }
            let seed = p.integer_or("seed", 0)?;
            let spread = p.number_or("energy_spread", 1.0)?;
            let coupling = p.number_or("coupling_spread", 0.1)?;
            Ok(plain(random_network(sites, seed, spread, coupling)))
        }
        // H(t) = δσ_z/2 + εσ_x + V cos(ωt) σ_z/2
        "driven_tls" => {
            p.only(&["delta", "epsilon", "v"])?;
            let h0 = biased_tls(p.number("delta")?, p.number("epsilon")?);
            let h_plus = scaled(&pauli::sigma_z(), 0.25 * p.number("v")?);
            Ok(Built {
                hamiltonian: h0,
                drive: Some((h_plus.clone(), h_plus)),
            })
        }
        // H = H_S ⊗ I + ω I ⊗ a†a + V (σ_z/2) ⊗ (a† e^{−iωt} + a e^{iωt})
        "floquet_cavity" => {
            p.only(&["delta", "epsilon", "v", "n_max"])?;
            let omega = omega.ok_or_else(|| CliError::config(key, "floquet_cavity needs a drive frequency"))?;
            let n_max = p.integer_or("n_max", 10)? as usize;
            let problem = qme::floquet::FloquetProblem::cavity(
                &biased_tls(p.number("delta")?, p.number("epsilon")?),
                &scaled(&pauli::sigma_z(), 0.5),
                p.number("v")?,
                omega,
                n_max,
                1,
            )
            .map_err(|e| CliError::config(key, e.to_string()))?;
            Ok(Built {
                hamiltonian: problem.h0,
                drive: Some((problem.h_plus, problem.h_minus)),
            })
        }
        // Generator of cos θ|00⟩ + sin θ|11⟩ from |00⟩: σ_y on span{|00⟩, |11⟩}.
        "bell_pair" => {
            p.only(&[])?;
            let mut g = linalg::zeros(4, 4);
            g[[0, 3]] = C64::new(0.0, -1.0);
            g[[3, 0]] = C64::new(0.0, 1.0);
            Ok(plain(g))
        }
        other => Err(CliError::config(
            format!("{key}.builder"),
            format!("unknown builder `{other}` (expected one of {})", BUILDERS.join(", ")),
        )),
    }
}

pub fn random_network(sites: usize, seed: u64, energy_spread: f64, coupling_spread: f64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = linalg::zeros(sites, sites);
    for k in 0..sites {
        h[[k, k]] = C64::new(energy_spread * rng.random::<f64>(), 0.0);
    }
    for j in 0..sites {
        for k in j + 1..sites {
            let v = coupling_spread * (2.0 * rng.random::<f64>() - 1.0);
            h[[j, k]] = C64::new(v, 0.0);
            h[[k, j]] = C64::new(v, 0.0);
        }
    }
    h
}

fn parse_indices(args: &str, count: usize, key: &str) -> CliResult<Vec<usize>> {
    let parts: Vec<&str> = args.split(',').map(str::trim).collect();
    if parts.len() != count {
        return Err(CliError::config(key, format!("expected {count} indices in `{args}`")));
    }
    parts
        .iter()
        .map(|s| s.parse::<usize>().map_err(|_| CliError::config(key, format!("invalid index `{s}`"))))
        .collect()
}

fn check_index(i: usize, d: usize, key: &str) -> CliResult<usize> {
    if i >= d {
        return Err(CliError::config(key, format!("index {i} out of range for dimension {d}")));
    }
    Ok(i)
}

/// Operator named `name` on a `d`-dimensional space.
///
/// Two-level names follow the convention index 0 = |g⟩: `sigma_plus = |e⟩⟨g|`.
fn named(name: &str, d: usize, key: &str) -> CliResult<CMatrix> {
    let two = |m: CMatrix| {
        if d == 2 {
            Ok(m)
        } else {
            Err(CliError::config(key, format!("`{name}` is a two-level operator, system dimension is {d}")))
        }
    };
    let name = name.trim();
    if let Some(args) = name.strip_prefix("ket_bra(").and_then(|s| s.strip_suffix(')')) {
        let ij = parse_indices(args, 2, key)?;
        return Ok(pauli::ket_bra(d, check_index(ij[0], d, key)?, check_index(ij[1], d, key)?));
    }
    if let Some(args) = name.strip_prefix("projector(").and_then(|s| s.strip_suffix(')')) {
        let k = check_index(parse_indices(args, 1, key)?[0], d, key)?;
        return Ok(pauli::ket_bra(d, k, k));
    }
    match name {
        "identity" => Ok(linalg::identity(d)),
        "zero" => Ok(linalg::zeros(d, d)),
        "sigma_x" => two(pauli::sigma_x()),
        "sigma_y" => two(pauli::sigma_y()),
        "sigma_z" => two(pauli::sigma_z()),
        "sigma_plus" => two(pauli::ket_bra(2, 1, 0)),
        "sigma_minus" => two(pauli::ket_bra(2, 0, 1)),
        "annihilation" => Ok(pauli::annihilation(d - 1)),
        "number" => {
            let a = pauli::annihilation(d - 1);
            Ok(linalg::dagger(&a).dot(&a))
        }
        other => Err(CliError::config(key, format!("unknown operator `{other}`"))),
    }
}

/// Resolves an operator specification on a `d`-dimensional space.
pub fn operator(spec: &OperatorSpec, d: usize, key: &str) -> CliResult<CMatrix> {
    match spec {
        OperatorSpec::Named(name) => named(name, d, key),
        OperatorSpec::Matrix(rows) => matrix(rows, d, key),
        OperatorSpec::Scaled { scale, operator: inner } => {
            let s = scale.value();
            Ok(operator(inner, d, &format!("{key}.operator"))?.mapv(|z| z * s))
        }
        OperatorSpec::Sum { sum } => {
            let mut total = linalg::zeros(d, d);
            for (i, term) in sum.iter().enumerate() {
                total = total + operator(term, d, &format!("{key}.sum[{i}]"))?;
            }
            Ok(total)
        }
    }
}

/// Row-major nested array to a `d × d` matrix.
pub fn matrix(rows: &[Vec<crate::config::ComplexIn>], d: usize, key: &str) -> CliResult<CMatrix> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(CliError::config(key, format!("expected a {d}x{d} matrix")));
    }
    let m = CMatrix::from_shape_fn((d, d), |(i, j)| rows[i][j].value());
    if !linalg::all_finite(&m) {
        return Err(CliError::config(key, "matrix has non-finite entries"));
    }
    Ok(m)
}
