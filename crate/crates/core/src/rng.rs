//! Deterministic random substreams.
//!
//! Every Monte Carlo sample draws from its own ChaCha8 stream whose seed is a
//! SplitMix64 hash of the master seed and the sample's coordinates
//! (κ-index, sample-index, ...). Results therefore do not depend on how the
//! samples are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the substream at `path` below `master`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |h, &i| splitmix64(h ^ splitmix64(i.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, path))
}
