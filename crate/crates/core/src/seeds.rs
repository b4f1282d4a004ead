//! Seed derivation shared by every randomized stage.
//!
//! Every random draw in the engine comes from a ChaCha8 stream seeded by
//! `derive(base, stream, index)`, so a task's randomness depends only on its
//! identity and never on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named sub-streams so that, e.g., the split and the bootstrap never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Split = 1,
    Subsample = 2,
    Folds = 3,
    SearchSample = 4,
    SgdEpoch = 5,
    TestBootstrap = 6,
    TrainBootstrap = 7,
    Synthetic = 8,
    CandidateOrder = 9,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed, a stream tag and a task index into a new 64-bit seed.
pub fn derive(base: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ stream as u64) ^ index)
}

pub fn rng(base: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, stream, index))
}
