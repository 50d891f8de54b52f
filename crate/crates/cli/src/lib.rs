//! Scenario-driven front end for the `qme` solvers.
//!
//! A scenario is a JSON document describing a system, a solver, output
//! times and the tables to write. [`run_command`] executes one and writes CSV
//! files plus a `manifest.json` into an output directory.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builders;
pub mod bundled;
pub mod checks;
pub mod config;
pub mod error;
pub mod logger;
pub mod output;
pub mod run;
pub mod scenario;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use error::{CliError, CliResult};

use checks::CheckOutcome;
use output::{CheckRecord, RunManifest};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Reads a scenario from a file, or from the bundled set when no file of that
/// name exists.
pub fn load(source: &str) -> CliResult<(Vec<u8>, config::ScenarioConfig)> {
    let path = Path::new(source);
    let bytes = if path.exists() {
        std::fs::read(path).map_err(|e| CliError::Io(format!("{source}: {e}")))?
    } else if let Some(text) = bundled::find(source) {
        text.as_bytes().to_vec()
    } else {
        return Err(CliError::Io(format!("{source}: no such file or bundled scenario")));
    };
    let text = std::str::from_utf8(&bytes).map_err(|_| CliError::config("<document>", "not valid UTF-8"))?;
    let cfg = config::parse(text)?;
    Ok((bytes, cfg))
}

/// Parses and resolves a scenario without running it.
pub fn validate_command(source: &str) -> CliResult<scenario::Scenario> {
    let (_, cfg) = load(source)?;
    scenario::resolve(cfg, None)
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
    pub checks: Vec<CheckOutcome>,
}

/// Runs a scenario, writes its outputs and manifest under `out_dir`, and with
/// `check` evaluates its self-checks. Failed checks are reported as
/// [`CliError::Check`] after the files are written.
pub fn run_command(source: &str, check: bool, seed: Option<u64>, out_dir: &Path) -> CliResult<RunReport> {
    let (bytes, cfg) = load(source)?;
    let scn = scenario::resolve(cfg, seed)?;
    let start = Instant::now();
    let data = run::execute(&scn)?;
    let outcomes = if check { checks::evaluate(&scn, &data)? } else { Vec::new() };
    let wall = start.elapsed().as_secs_f64();

    output::write_tables(out_dir, &data.tables)?;
    let mut solver = scn.config.solver.clone();
    solver.seed = scn.seed;
    let manifest = RunManifest {
        scenario: scn.config.name.clone(),
        scenario_sha256: output::sha256_hex(&bytes),
        seed: scn.seed,
        solver,
        version: VERSION.to_string(),
        wall_time_s: wall,
        outputs: data.tables.iter().map(|(p, _)| p.clone()).collect(),
        checks: check.then(|| outcomes.iter().map(CheckRecord::from).collect()),
    };
    output::write_manifest(out_dir, &manifest)?;

    let failed: Vec<String> = outcomes
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect();
    if !failed.is_empty() {
        return Err(CliError::Check(failed));
    }
    Ok(RunReport {
        out_dir: out_dir.to_path_buf(),
        manifest,
        checks: outcomes,
    })
}
