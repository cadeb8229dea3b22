//! Deterministic seed splitting.
//!
//! Every run owns a single master seed. Each consumer (environment draws,
//! policy randomness, oracle training, replication index) gets its own
//! stream derived with [`derive_seed`], so traces are reproducible
//! bit-for-bit and independent of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream id for environment randomness (context and reward draws).
pub const STREAM_ENV: u64 = 0x45;
/// Stream id for policy randomness (initial expert, exploration, arm draws).
pub const STREAM_POLICY: u64 = 0x50;
/// Stream id for oracle training (shuffles, bootstrap resamples).
pub const STREAM_ORACLE: u64 = 0x4f;

/// SplitMix64 finalizer; good avalanche, cheap, stable across platforms.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed for `stream` from a master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

/// Seeded generator for a given (master, stream) pair.
pub fn derive_rng(master: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}
