//! Seeded, splittable random streams.
//!
//! Every randomized operation takes an explicit stream; there is no global
//! RNG. ChaCha exposes 2^64 independent streams per seed, so parallel trials
//! can each own a substream and results do not depend on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream used throughout the library.
pub type Stream = ChaCha8Rng;

/// Root stream for a seed.
pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent substream `index` of `seed`.
pub fn substream(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Collapses `(seed, index)` into a fresh 64-bit seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    use rand::RngCore;
    substream(seed, index).next_u64()
}
