//! Reproducible random streams.
//!
//! Every replica owns a ChaCha8 generator keyed by the base seed and placed
//! on its own stream (ChaCha supports 2^64 independent streams), so results
//! never depend on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Generator for replica `index` of an experiment seeded with `base_seed`.
pub fn replica_rng(base_seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

/// Generator for a named sub-experiment; `salt` keeps sub-experiments that
/// share a base seed on disjoint stream families.
pub fn salted_rng(base_seed: u64, salt: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(base_seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}
