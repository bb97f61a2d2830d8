#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semspace_core::catalog::EmbeddingSet;

pub use semspace_core::synthetic::gaussian_clusters;

pub fn random_set(n: usize, dim: usize, seed: u64) -> EmbeddingSet<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EmbeddingSet::from_rows(
        dim,
        (0..n as u64).map(|id| (id, (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())),
    )
    .unwrap()
}
