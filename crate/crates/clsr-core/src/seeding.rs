//! Seed derivation for deterministic per-item random substreams.
//!
//! Parallel stages (data prep across series, synthetic generation, dropout
//! masks per batch element) each draw from their own ChaCha stream derived
//! from a base seed and a stream index, so results do not depend on
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a new 64-bit seed from a base seed and a stream index.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix(base ^ mix(index))
}

/// Deterministic RNG for stream `index` of `base`.
pub fn substream(base: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, index))
}
