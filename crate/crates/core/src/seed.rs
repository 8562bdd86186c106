//! Deterministic seed derivation.
//!
//! Every random stream in a run descends from one master seed. Sub-streams
//! (Alice, Bob, a detector, trial `i` of an experiment) are derived by
//! mixing the master seed with a stream label, so results do not depend on
//! the order in which streams are consumed or on parallelism.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// Well-known stream labels.
pub mod stream {
    pub const ALICE: u64 = 0xA11CE;
    pub const BOB: u64 = 0xB0B;
    pub const DETECTOR: u64 = 0xDE7EC7;
    pub const EVE: u64 = 0xE7E;
    pub const SESSION: u64 = 0x5E55;
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, label: u64) -> u64 {
    mix(mix(master) ^ label.rotate_left(17))
}

pub fn rng_for(master: u64, label: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, label))
}
