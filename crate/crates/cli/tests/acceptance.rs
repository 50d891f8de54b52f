//! Acceptance suite: one line per criterion, all must pass.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use qme::correlations::{emission_spectrum, two_time_correlation, CorrelationSeries, damped_oscillation};
use qme::linalg::{self, pauli, CMatrix, C64};
use qme::liouville::{build_liouvillian, devectorize, lindblad_rhs, steady_states, unique_steady_state, vectorize, LindbladChannel};
use qme::operators::{partial_trace, purity, DensityOperator, Subsystem};
use qme::propagation::{propagate_expm, propagator, rk45_vector, Rk45Options, TimeGrid, Trajectory};
use qme::redfield::{bloch_redfield_tensor, eigenframe, ohmic_spectrum, CouplingSpec, NoiseSpectrum};
use qme_cli::checks::{cptp_report, log_log_slope, max_population_deviation, nearest_peaks};
use qme_cli::config::{Method, ScenarioConfig};
use qme_cli::{bundled, config, run, scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn bundled_config(name: &str) -> ScenarioConfig {
    config::parse(bundled::find(name).expect("bundled scenario")).expect("valid scenario")
}

fn bundled_scenario(name: &str) -> scenario::Scenario {
    scenario::resolve(bundled_config(name), None).expect("scenario resolves")
}

fn states(s: &scenario::Scenario, m: Method) -> Trajectory {
    run::simulate(s, m).expect("simulation runs").expect("state trajectory")
}

fn random_matrix(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
    CMatrix::from_shape_fn((d, d), |_| C64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0))
}

fn random_hermitian(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
    let a = random_matrix(rng, d);
    (&a + &linalg::dagger(&a)).mapv(|z| z * 0.5)
}

fn random_channels(rng: &mut ChaCha8Rng, d: usize) -> Vec<LindbladChannel> {
    let n = rng.random_range(1..=3);
    (0..n)
        .map(|_| LindbladChannel::new(random_matrix(rng, d), rng.random::<f64>()).unwrap())
        .collect()
}

fn random_state(rng: &mut ChaCha8Rng, d: usize) -> DensityOperator {
    let a = random_matrix(rng, d);
    let m = a.dot(&linalg::dagger(&a));
    let tr = linalg::trace(&m);
    DensityOperator::new(m.mapv(|z| z / tr)).unwrap()
}

// 1. Null spaces of the two-level generator in the relaxation and dephasing limits.
fn steady_state_null_spaces() -> Outcome {
    let h = |omega: f64, delta: f64| linalg::from_real_rows(&[&[0.0, omega], &[omega, delta]]);
    let down = pauli::ket_bra(2, 0, 1);
    let relax = build_liouvillian(&h(0.0, 1.0), &[LindbladChannel::new(down, 1.0).unwrap()]).unwrap();
    let ss = steady_states(&relax).unwrap();
    let ground = pauli::ket_bra(2, 0, 0);
    let dev = ss.first().map_or(f64::INFINITY, |m| linalg::max_abs_diff(m, &ground));
    let dephase = build_liouvillian(&h(1.0, 1.0), &[LindbladChannel::new(linalg::identity(2), 1.0).unwrap()]).unwrap();
    let n2 = steady_states(&dephase).unwrap().len();
    outcome(
        ss.len() == 1 && dev <= 1e-10 && n2 == 2,
        format!("relaxation: dimension {}, |rho - |g><g|| = {dev:.1e}; dephasing+driving: dimension {n2}", ss.len()),
    )
}

// 2. Marginal purity of cos t|00> + sin t|11>.
fn purity_curve() -> Outcome {
    let s = bundled_scenario("partial_trace");
    let l = s.liouvillian().unwrap();
    let at_quarter = propagate_expm(&l, &s.initial, PI / 4.0).unwrap();
    let p_quarter = purity(&partial_trace(&at_quarter, (2, 2), Subsystem::First).unwrap());
    let traj = states(&s, Method::Expm);
    let worst = traj
        .iter()
        .map(|(t, rho)| {
            let p = purity(&partial_trace(rho, (2, 2), Subsystem::First).unwrap());
            (p - (t.cos().powi(4) + t.sin().powi(4))).abs()
        })
        .fold(0.0, f64::max);
    let dq = (p_quarter - 0.5).abs();
    outcome(dq <= 1e-12 && worst <= 1e-12, format!("|purity(pi/4) - 1/2| = {dq:.1e}; sweep max error {worst:.1e}"))
}

// 3. Liouvillian action against the direct right-hand side.
fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(1..=5);
        let h = random_hermitian(&mut rng, d);
        let channels = random_channels(&mut rng, d);
        let rho = random_state(&mut rng, d);
        let l = build_liouvillian(&h, &channels).unwrap();
        let via_l = devectorize(&l.matrix().dot(&vectorize(rho.matrix())), d).unwrap();
        let direct = lindblad_rhs(rho.matrix(), &h, &channels).unwrap();
        worst = worst.max(linalg::frobenius_norm(&(via_l - direct)));
    }
    outcome(worst <= 1e-12, format!("100 models, max Frobenius difference {worst:.1e}"))
}

// 4. expm, spectral, semigroup and rk45 on the same system.
fn method_agreement() -> Outcome {
    let s = bundled_scenario("super_matrix_exp");
    let methods = [Method::Expm, Method::Spectral, Method::Semigroup, Method::Rk45];
    let trajs: Vec<Trajectory> = methods.iter().map(|&m| states(&s, m)).collect();
    let mut worst: f64 = 0.0;
    for i in 0..trajs.len() {
        for j in i + 1..trajs.len() {
            worst = worst.max(max_population_deviation(&trajs[i], &trajs[j]));
        }
    }
    outcome(
        worst <= 1e-7 && trajs.iter().all(|t| t.len() == 200),
        format!("4 methods, 200 points, max pairwise population deviation {worst:.1e}"),
    )
}

// 5. P(s)P(t) = P(s+t).
fn semigroup_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let d = rng.random_range(2..=4);
        let l = build_liouvillian(&random_hermitian(&mut rng, d), &random_channels(&mut rng, d)).unwrap();
        for _ in 0..20 {
            let (s, t) = (rng.random::<f64>() * 2.0, rng.random::<f64>() * 2.0);
            let composed = propagator(&l, s).dot(&propagator(&l, t));
            worst = worst.max(linalg::max_abs_diff(&composed, &propagator(&l, s + t)));
        }
    }
    outcome(worst <= 1e-12, format!("200 pairs on 10 generators, max entry difference {worst:.1e}"))
}

// 6. First-order convergence of the Lie-Trotter splitting.
fn trotter_convergence() -> Outcome {
    let s = bundled_scenario("suzuki_trotter");
    let errs = run::trotter_errors(&s, &[50, 100, 1000]).unwrap();
    let monotone = errs.windows(2).all(|w| w[1].2 < w[0].2);
    let dts: Vec<f64> = errs.iter().map(|e| e.1).collect();
    let es: Vec<f64> = errs.iter().map(|e| e.2).collect();
    let slope = log_log_slope(&dts, &es);
    outcome(
        monotone && (0.8..=1.2).contains(&slope),
        format!("errors {:.2e} {:.2e} {:.2e}, slope {slope:.3}", es[0], es[1], es[2]),
    )
}

fn x_basis_population(rho: &CMatrix) -> f64 {
    0.5 * (rho[[0, 0]] + rho[[1, 1]] + rho[[0, 1]] + rho[[1, 0]]).re
}

fn mcwf_errors(n: usize, exact: &Trajectory) -> (f64, f64) {
    let mut cfg = bundled_config("mcwf");
    cfg.solver.trajectories = Some(n);
    let s = scenario::resolve(cfg, None).unwrap();
    let traj = states(&s, Method::Mcwf);
    let mut max_dev: f64 = 0.0;
    let mut sq = 0.0;
    for (a, b) in traj.states.iter().zip(&exact.states) {
        let dx = x_basis_population(a.matrix()) - x_basis_population(b.matrix());
        max_dev = max_dev.max(dx.abs());
        for (p, q) in a.populations().iter().zip(b.populations()) {
            max_dev = max_dev.max((p - q).abs());
        }
        sq += dx * dx;
    }
    (max_dev, (sq / traj.len() as f64).sqrt())
}

// 7. Trajectory average against the master equation, and its 1/sqrt(N) error.
fn mcwf_accuracy() -> Outcome {
    let s = bundled_scenario("mcwf");
    let exact = states(&s, Method::Expm);
    let (dev_1000, _) = mcwf_errors(1000, &exact);
    let scaled: Vec<f64> = [100usize, 400, 1600]
        .iter()
        .map(|&n| mcwf_errors(n, &exact).1 * (n as f64).sqrt())
        .collect();
    let spread = scaled.iter().copied().fold(0.0, f64::max) / scaled.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        dev_1000 < 0.05 && spread <= 2.0,
        format!(
            "N=1000 max population deviation (z and x bases) {dev_1000:.3}; rms*sqrt(N) = {:.3} {:.3} {:.3}, spread {spread:.2}",
            scaled[0], scaled[1], scaled[2]
        ),
    )
}

// 8. Ohmic detailed balance and the spin-boson Gibbs ratio.
fn detailed_balance() -> Outcome {
    let (eta, wc, beta) = (0.02, 5.0, 1.3);
    let worst = (1..=100)
        .map(|k| {
            let w = 0.05 * k as f64;
            let ratio = ohmic_spectrum(eta, wc, beta, -w) / ohmic_spectrum(eta, wc, beta, w);
            (ratio / (-beta * w).exp() - 1.0).abs()
        })
        .fold(0.0, f64::max);
    let h = pauli::sigma_z().mapv(|z| z * 0.5) + pauli::sigma_x().mapv(|z| z * 0.2);
    let bath = NoiseSpectrum::ohmic(eta, wc, beta).unwrap();
    let g = bloch_redfield_tensor(&h, &[CouplingSpec::new(pauli::sigma_z(), bath).unwrap()], true, None).unwrap();
    let rho = unique_steady_state(&g).unwrap();
    let p = rho.populations();
    let e = eigenframe(&h).unwrap().energies;
    let dev = (p[1] / p[0] - (-beta * (e[1] - e[0])).exp()).abs();
    outcome(
        worst <= 1e-12 && dev <= 1e-6,
        format!("max relative error of S(-w)/S(w) {worst:.1e}; |p_e/p_g - exp(-beta dE)| = {dev:.1e}"),
    )
}

// 9. Bloch-Redfield against the Pauli master equation on the random network.
fn pauli_vs_bloch_redfield() -> Outcome {
    let s = bundled_scenario("random_network");
    let br = states(&s, Method::BlochRedfield);
    let pauli = run::pauli_trajectory(&s).unwrap();
    let mut dev: f64 = 0.0;
    let mut simplex: f64 = 0.0;
    for (rho, p) in br.states.iter().zip(&pauli) {
        for (a, b) in rho.populations().iter().zip(p) {
            dev = dev.max((a - b).abs());
        }
        simplex = simplex.max(-p.iter().copied().fold(0.0, f64::min));
        simplex = simplex.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    outcome(
        dev <= 2e-2 && simplex <= 1e-9,
        format!("{} times, max |p_BR - p_Pauli| = {dev:.1e}, simplex violation {simplex:.1e}", br.len()),
    )
}

// 10. Floquet quasi-energies by two routes, and n-photon resonances.
fn floquet_resonances() -> Outcome {
    let s = bundled_scenario("floquet");
    let omega = s.floquet_setup().unwrap().omega.unwrap();
    let (hf, prop) = run::floquet_dual_route(&s).unwrap();
    let route = hf
        .iter()
        .zip(&prop)
        .map(|(a, b)| qme::floquet::periodic_distance(*a, *b, omega))
        .fold(0.0, f64::max);
    let (ws, ps) = run::floquet_sweep(&s, 0, 1).unwrap();
    let e = linalg::eigvalsh(&s.hamiltonian).unwrap();
    let gap = e[1] - e[0];
    let step = ws[1] - ws[0];
    let dist = nearest_peaks(&ws, &ps, &[gap, gap / 2.0]);
    let v_over_omega = 0.3 / omega;
    outcome(
        (v_over_omega - 0.1).abs() < 1e-12 && route <= 1e-7 && dist.iter().all(|&x| x <= step * (1.0 + 1e-9)),
        format!(
            "V/w = {v_over_omega:.2}: route difference {route:.1e}; n=1,2 maxima within {:.4}, {:.4} of prediction (step {step:.3})",
            dist[0], dist[1]
        ),
    )
}

// 11. Lorentzian line shape and quantum regression against brute force.
fn correlation_spectrum() -> Outcome {
    let (gamma, w0) = (0.1, 1.0);
    let series = CorrelationSeries::from_fn(&TimeGrid::span(150.0, 15_000).unwrap(), damped_oscillation(gamma, w0)).unwrap();
    let omegas: Vec<f64> = (0..=400).map(|k| -2.0 + 0.005 * k as f64).collect();
    let step = omegas[1] - omegas[0];
    let spec = emission_spectrum(&series, &omegas);
    let peak_err = (spec.peak().unwrap() + w0).abs();
    let fwhm_err = (spec.fwhm().unwrap() - 2.0 * gamma).abs();

    let opts = Rk45Options {
        rtol: 1e-11,
        atol: 1e-13,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut qrt: f64 = 0.0;
    for _ in 0..5 {
        let l = build_liouvillian(&random_hermitian(&mut rng, 3), &random_channels(&mut rng, 3)).unwrap();
        let rho0 = random_state(&mut rng, 3);
        let (a, b) = (random_matrix(&mut rng, 3), random_matrix(&mut rng, 3));
        let t = 0.7;
        let taus = TimeGrid::new(0.0, 0.05, 40).unwrap();
        let c = two_time_correlation(&l, &rho0, &a, &b, t, &taus).unwrap();
        let lm = l.matrix().clone();
        let rhs = |_: f64, v: &qme::CVector| lm.dot(v);
        let rho_t = rk45_vector(rhs, &vectorize(rho0.matrix()), &[0.0, t], &opts).unwrap().pop().unwrap();
        let seeded = b.dot(&devectorize(&rho_t, 3).unwrap());
        let brute = rk45_vector(rhs, &vectorize(&seeded), &taus.times(), &opts).unwrap();
        for (v, x) in brute.iter().zip(c.values()) {
            qrt = qrt.max((linalg::trace(&a.dot(&devectorize(v, 3).unwrap())) - x).norm());
        }
    }
    outcome(
        peak_err <= step && fwhm_err <= step && qrt <= 1e-6,
        format!("peak error {peak_err:.1e}, FWHM error {fwhm_err:.1e} (step {step:.3}); regression vs brute force {qrt:.1e}"),
    )
}

// 12. Trace, Hermiticity and positivity for every deterministic solver on every Lindblad scenario.
fn cptp_suite() -> Outcome {
    let mut runs = 0;
    let mut failures = Vec::new();
    let mut worst = (0.0f64, 0.0f64, f64::INFINITY);
    for (name, text) in bundled::SCENARIOS {
        let base = config::parse(text).unwrap();
        if base.system.channels.is_none() {
            continue;
        }
        let methods: Vec<Method> = if base.system.drives.is_empty() {
            vec![Method::Expm, Method::Spectral, Method::Semigroup, Method::Trotter, Method::Rk45, Method::Piecewise]
        } else {
            vec![Method::Rk45, Method::Piecewise]
        };
        for m in methods {
            let mut cfg = base.clone();
            cfg.solver.method = m;
            cfg.solver.trotter_steps = cfg.solver.trotter_steps.or(Some(100));
            cfg.check = None;
            let s = scenario::resolve(cfg, None).unwrap();
            let r = cptp_report(&states(&s, m)).unwrap();
            runs += 1;
            worst = (worst.0.max(r.trace_dev), worst.1.max(r.hermiticity_dev), worst.2.min(r.min_eigenvalue));
            if !r.passed() {
                failures.push(format!("{name}/{}", m.name()));
            }
        }
    }
    outcome(
        failures.is_empty() && runs > 0,
        format!(
            "{runs} runs; worst trace {:.1e}, Hermiticity {:.1e}, min eigenvalue {:.1e}; failures {failures:?}",
            worst.0, worst.1, worst.2
        ),
    )
}

#[test]
fn acceptance_criteria() {
    type Criterion = (usize, &'static str, fn() -> Outcome, Option<Duration>);
    let criteria: [Criterion; 12] = [
        (1, "steady-state null spaces", steady_state_null_spaces, Some(Duration::from_secs(1))),
        (2, "Bell-state marginal purity", purity_curve, None),
        (3, "Liouvillian oracle equivalence", oracle_equivalence, None),
        (4, "method cross-agreement", method_agreement, Some(Duration::from_secs(5))),
        (5, "semigroup law", semigroup_law, None),
        (6, "Trotter convergence", trotter_convergence, None),
        (7, "MCWF accuracy and scaling", mcwf_accuracy, Some(Duration::from_secs(30))),
        (8, "detailed balance", detailed_balance, None),
        (9, "Pauli vs Bloch-Redfield", pauli_vs_bloch_redfield, None),
        (10, "Floquet dual route and resonances", floquet_resonances, Some(Duration::from_secs(60))),
        (11, "correlation and spectrum", correlation_spectrum, None),
        (12, "CPTP property suite", cptp_suite, None),
    ];
    let mut failed = Vec::new();
    for (id, name, f, limit) in criteria {
        let start = Instant::now();
        let o = f();
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let passed = o.passed && in_time;
        let budget = limit.map(|l| format!(" of {} s", l.as_secs())).unwrap_or_default();
        println!(
            "criterion {id:>2} {}: {name} ({:.3} s{budget}): {}",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            o.detail
        );
        if !passed {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
