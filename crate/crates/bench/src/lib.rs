//! Shared instance builders for the benchmark targets.

use prescore_core::planted::{generate_planted, PlantedConfig, PlantedInstance};
use prescore_core::{gaussian_matrix, Matrix, Rng};

/// Random dense q/k/v triple.
pub fn random_qkv(n: usize, d: usize, seed: u64) -> (Matrix, Matrix, Matrix) {
    let mut rng = Rng::new(seed);
    let q = gaussian_matrix(&mut rng, n, d, 0.0, 1.0).unwrap();
    let k = gaussian_matrix(&mut rng, n, d, 0.0, 1.0).unwrap();
    let v = gaussian_matrix(&mut rng, n, d, 0.0, 1.0).unwrap();
    (q, k, v)
}

/// Planted instance with the default noise constants.
pub fn planted(n: usize, d: usize, epsilon: f64, seed: u64) -> PlantedInstance {
    let cfg = PlantedConfig::new(n, d, epsilon, 0.1, 0.1, seed);
    generate_planted(&cfg, &mut Rng::new(seed)).unwrap()
}
