//! Deterministic seed derivation. Every randomized component takes an
//! explicit `u64` seed; sub-tasks derive their own seeds by mixing the parent
//! seed with fixed tags, so results never depend on scheduling or thread
//! count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; a bijective mix with good avalanche.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a list of tags.
pub fn derive_seed(parent: u64, tags: &[u64]) -> u64 {
    let mut state = mix(parent);
    for &t in tags {
        state = mix(state ^ t.wrapping_mul(0xd1342543de82ef95));
    }
    state
}

/// A seeded generator; `stream` selects an independent substream of the same
/// seed (used for counter-based Monte-Carlo chunks).
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}
