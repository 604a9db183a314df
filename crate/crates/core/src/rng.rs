//! Deterministic random streams. Every stochastic block draws from its own
//! ChaCha stream derived from the run seed and a fixed stream label, so that
//! adding draws in one block never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const STREAM_SYMBOLS: u64 = 0x5359_4d42;
pub const STREAM_PHASE: u64 = 0x5048_4153;
pub const STREAM_CHANNEL_NOISE: u64 = 0x4348_4e4e;
pub const STREAM_SHOT: u64 = 0x5348_4f54;
pub const STREAM_ELECTRONIC: u64 = 0x454c_4543;

/// Splitmix-style mixing of a seed and a label; nearby inputs land far apart.
pub fn derive(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, label: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, label))
}

#[inline]
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `n` i.i.d. zero-mean Gaussian samples with standard deviation `sigma`.
pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Vec<f64> {
    (0..n).map(|_| sigma * normal(rng)).collect()
}
