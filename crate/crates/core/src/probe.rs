//! Deterministic random probes for round-trip and symmetry checks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Real;

/// `n × m` matrix with entries uniform in `[-1, 1)`, reproducible from `seed`.
pub fn random_matrix<T: Real>(n: usize, m: usize, seed: u64) -> DMatrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, m, |_, _| T::lit(rng.random_range(-1.0..1.0)))
}

/// `n × m` matrix with entries uniform in `[0, 1)`.
pub fn random_nonnegative<T: Real>(n: usize, m: usize, seed: u64) -> DMatrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, m, |_, _| T::lit(rng.random_range(0.0..1.0)))
}
