//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tcl_elim::liouvillian::build_gksl;
use tcl_elim::numerics::{c, dagger, CMatrix, C64};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut StdRng, n: usize) -> CMatrix {
    Array2::from_shape_fn((n, n), |_| {
        c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

pub fn random_hermitian(rng: &mut StdRng, n: usize) -> CMatrix {
    let a = random_matrix(rng, n);
    (&a + &dagger(&a)).mapv(|z| z * 0.5)
}

/// Random density matrix `A A^dag / tr`.
pub fn random_state(rng: &mut StdRng, n: usize) -> CMatrix {
    let a = random_matrix(rng, n);
    let rho = a.dot(&dagger(&a));
    let tr: C64 = (0..n).map(|i| rho[[i, i]]).sum();
    rho.mapv(|z| z / tr)
}

/// Random GKSL generator with `k` random jump operators.
pub fn random_gksl(rng: &mut StdRng, n: usize, k: usize) -> CMatrix {
    let h = random_hermitian(rng, n);
    let jumps: Vec<(f64, CMatrix)> = (0..k)
        .map(|_| (rng.random_range(0.1..1.0), random_matrix(rng, n)))
        .collect();
    build_gksl(&h, &jumps).expect("valid generator")
}

/// Composite Simpson weights on `n + 1` equally spaced points (n even).
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(n.is_multiple_of(2) && n > 0);
    (0..=n)
        .map(|k| {
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}
