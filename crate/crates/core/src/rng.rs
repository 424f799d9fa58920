//! Seeded randomness.
//!
//! All stochastic code in the crate draws from [`CgRng`], which is ChaCha with
//! 8 rounds (`rand_chacha::ChaCha8Rng`). Its output stream is fixed by the
//! algorithm and the 64-bit seed, independent of platform or thread count.
//! Normal variates use `rand_distr::StandardNormal` (ziggurat).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type CgRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> CgRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one subsampling run of one class:
/// `seed ^ splitmix64((class << 32) | run)`.
pub fn derive_run_seed(seed: u64, class: u32, run: u32) -> u64 {
    seed ^ splitmix64((u64::from(class) << 32) | u64::from(run))
}

/// Seed for an auxiliary stream (noise injection, spectrum sampling) so that it
/// never coincides with the primary stream of the same user seed.
pub fn derive_stream_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}
