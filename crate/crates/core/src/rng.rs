//! Deterministic, hierarchically derived random streams.
//!
//! Every randomized routine takes its randomness from an explicit stream.
//! Streams are addressed by a path of integers (seed, task, step, ...) so that
//! any sub-computation can be replayed without running its predecessors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A node in the stream tree; cheap to copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream(u64);

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream(splitmix64(seed))
    }

    pub fn child(self, index: u64) -> Self {
        SeedStream(splitmix64(
            self.0 ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)),
        ))
    }

    pub fn rng(self) -> Rng {
        Rng::seed_from_u64(self.0)
    }
}
