#![allow(dead_code)]

use qme::linalg::{self, CMatrix, C64};
use qme::liouville::{build_liouvillian, LindbladChannel, Liouvillian};
use qme::operators::DensityOperator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, d: usize) -> CMatrix {
    CMatrix::from_shape_fn((d, d), |_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

pub fn random_hermitian(rng: &mut impl Rng, d: usize) -> CMatrix {
    let a = random_matrix(rng, d);
    (&a + &linalg::dagger(&a)).mapv(|z| z * 0.5)
}

pub fn random_unitary(rng: &mut impl Rng, d: usize) -> CMatrix {
    let h = random_hermitian(rng, d);
    linalg::expm(&h.mapv(|z| z * C64::new(0.0, 1.0)))
}

pub fn random_state(rng: &mut impl Rng, d: usize) -> DensityOperator {
    let a = random_matrix(rng, d);
    let m = a.dot(&linalg::dagger(&a));
    let tr = linalg::trace(&m);
    DensityOperator::new(m.mapv(|z| z / tr)).expect("a a† / Tr is a state")
}

pub fn random_channels(rng: &mut impl Rng, d: usize, n: usize) -> Vec<LindbladChannel> {
    (0..n)
        .map(|_| LindbladChannel::new(random_matrix(rng, d), rng.random_range(0.0..1.0)).unwrap())
        .collect()
}

pub struct Model {
    pub h: CMatrix,
    pub channels: Vec<LindbladChannel>,
    pub l: Liouvillian,
}

pub fn random_model(rng: &mut impl Rng, d: usize) -> Model {
    let h = random_hermitian(rng, d);
    let n = rng.random_range(1..=3);
    let channels = random_channels(rng, d, n);
    let l = build_liouvillian(&h, &channels).unwrap();
    Model { h, channels, l }
}
