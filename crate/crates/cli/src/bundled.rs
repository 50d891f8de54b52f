//! Scenarios shipped with the binary.

/// `(name, JSON document)` for every bundled scenario.
pub const SCENARIOS: [(&str, &str); 11] = [
    ("partial_trace", include_str!("../scenarios/partial_trace.json")),
    ("super_matrix_exp", include_str!("../scenarios/super_matrix_exp.json")),
    ("temporal_svd", include_str!("../scenarios/temporal_svd.json")),
    ("td_propagation", include_str!("../scenarios/td_propagation.json")),
    ("semigroup", include_str!("../scenarios/semigroup.json")),
    ("suzuki_trotter", include_str!("../scenarios/suzuki_trotter.json")),
    ("rk45", include_str!("../scenarios/rk45.json")),
    ("mcwf", include_str!("../scenarios/mcwf.json")),
    ("correlation_spectrum", include_str!("../scenarios/correlation_spectrum.json")),
    ("random_network", include_str!("../scenarios/random_network.json")),
    ("floquet", include_str!("../scenarios/floquet.json")),
];

pub fn find(name: &str) -> Option<&'static str> {
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}
