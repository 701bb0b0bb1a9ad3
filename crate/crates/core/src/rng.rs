//! Deterministic seed derivation for parallel work streams.
//!
//! Every stochastic stage of the pipeline draws from a `ChaCha8Rng` seeded
//! through [`child_seed`], so any (map, trajectory, step) unit of work gets
//! its own stream and results do not depend on scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche for cheap seed mixing.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed, a domain tag, and an index.
///
/// The tag keeps streams for different purposes (map generation, object
/// placement, planning, ...) disjoint even when indices collide.
pub fn child_seed(parent: u64, tag: &str, index: u64) -> u64 {
    let mut h = mix64(parent);
    for &b in tag.as_bytes() {
        h = mix64(h ^ u64::from(b));
    }
    mix64(h ^ index)
}

/// A seeded RNG for one unit of work.
pub fn stream(parent: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(parent, tag, index))
}
