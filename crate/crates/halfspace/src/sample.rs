//! Seeded, reproducible sampling on real and complex unit spheres.

use crate::linalg::C64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform point on the real unit sphere in `ℝ^d` (normalized Gaussian).
pub(crate) fn real_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Uniform point on the unit sphere of `ℂ^m` (real 2m-sphere).
pub(crate) fn complex_unit(rng: &mut ChaCha8Rng, m: usize) -> Vec<C64> {
    let flat = real_unit(rng, 2 * m);
    (0..m).map(|i| C64::new(flat[2 * i], flat[2 * i + 1])).collect()
}
