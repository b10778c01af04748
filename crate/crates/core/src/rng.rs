//! Seed derivation.
//!
//! Every random stream in the simulator is a `ChaCha8Rng` whose seed is
//! derived from a master seed and a path of integer labels (population
//! index, agent index, purpose tag, ...). Derivation folds each label into
//! the state with the SplitMix64 finalizer, so distinct paths give
//! statistically independent streams and the same path always gives the
//! same stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tags used as the last label of a derivation path.
pub mod purpose {
    pub const AGENT: u64 = 0xA6E7;
    pub const SCHEDULER: u64 = 0x5C4E;
    pub const METRICS: u64 = 0x3E7C;
    pub const PARTITION: u64 = 0x9A27;
    pub const INIT: u64 = 0x1217;
    pub const DATA: u64 = 0xDA7A;
    pub const PROBES: u64 = 0x960B;
    pub const MONTE_CARLO: u64 = 0x3C3C;
    pub const REPLICA: u64 = 0x4E91;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a 64-bit seed from `master` and a path of labels.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

pub fn stream(master: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, path))
}
