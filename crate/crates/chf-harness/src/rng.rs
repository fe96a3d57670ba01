//! All randomness flows from one counter-based generator, forked by
//! purpose. An experiment derives an independent stream per use site, so
//! adding a new consumer never shifts the draws of existing ones.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The root generator for an experiment seed.
pub fn root(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An independent stream derived from the same seed. Streams with
/// different ids never overlap, whatever the draw counts.
pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
