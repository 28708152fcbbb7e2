//! Stateless seed splitting for sweep cells and episode substreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random source driving a single episode.
pub type EpisodeRng = ChaCha8Rng;

const PROFILE_BITS: u32 = 21;
const REP_BITS: u32 = 22;

pub const MAX_PROFILES: usize = 1 << PROFILE_BITS;
pub const MAX_REPS: usize = 1 << REP_BITS;

/// SplitMix64 finalizer; a bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replication `rep` of the profile cell `(i1, i2)`.
///
/// The indices are packed into disjoint bit fields and passed through a
/// bijective mix keyed by the master seed, so distinct cells and replications
/// never collide under one master seed.
pub fn derive_seed(master: u64, i1: usize, i2: usize, rep: usize) -> u64 {
    assert!(i1 < MAX_PROFILES && i2 < MAX_PROFILES, "profile index out of range");
    assert!(rep < MAX_REPS, "replication index out of range");
    let packed = ((i1 as u64) << (PROFILE_BITS + REP_BITS)) | ((i2 as u64) << REP_BITS) | rep as u64;
    mix64(mix64(master) ^ packed)
}

/// Named substream of an episode seed, e.g. for tie-breaking after play ends.
pub fn substream(seed: u64, label: u64) -> EpisodeRng {
    EpisodeRng::seed_from_u64(mix64(seed ^ mix64(label)))
}

pub fn episode_rng(seed: u64) -> EpisodeRng {
    EpisodeRng::seed_from_u64(seed)
}
