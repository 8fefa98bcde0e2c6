//! Deterministic per-path random number streams.
//!
//! Every Monte Carlo path draws from its own counter-based stream derived
//! from `(base_seed, path_index)` alone, so results do not depend on how
//! paths are scheduled across worker threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Returns the random stream for one simulation path.
///
/// The generator is ChaCha12 keyed by `base_seed` with the ChaCha stream
/// counter set to `path_index`; distinct indices give statistically
/// independent streams under the same key.
pub fn path_stream(base_seed: u64, path_index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(base_seed);
    rng.set_stream(path_index);
    rng
}
