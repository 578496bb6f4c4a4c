//! Seeded random streams.
//!
//! All stochastic operations take an explicit [`SimRng`]. Independent
//! partitions (tiles, device instances, sweep cells) get child streams
//! derived from a master seed and a label, so results do not depend on the
//! order in which partitions are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `parent` and a path of labels.
pub fn child_seed(parent: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(mix(parent), |acc, &label| mix(acc ^ mix(label)))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child_rng(parent: u64, labels: &[u64]) -> SimRng {
    rng_from_seed(child_seed(parent, labels))
}
