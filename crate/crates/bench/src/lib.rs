//! Seeded fixtures shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use s8bq_core::{fit_codebook, Codebook, CodebookConfig, WeightTensor};

pub fn gaussian_tensor(seed: u64, rows: usize, cols: usize, std: f64) -> WeightTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).unwrap();
    let values = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
    WeightTensor::new("bench", vec![rows, cols], values).unwrap()
}

pub fn fitted(weights: &WeightTensor, bits: u8) -> Codebook {
    fit_codebook(weights, &CodebookConfig::with_bits(bits)).unwrap().codebook
}
