//! Seeded random streams.
//!
//! Every stochastic step in the crate draws from a ChaCha8 stream derived
//! from a user seed plus a fixed stream tag, so that independent stages never
//! share state and results are reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type LabRng = ChaCha8Rng;

/// Stream tags; values are arbitrary but must never change.
pub(crate) mod stream {
    pub const CENTERS: u64 = 1;
    pub const CAMERAS: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const COLORS: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const PAIRS: u64 = 6;
    pub const INIT: u64 = 7;
    pub const SHUFFLE: u64 = 8;
}

pub fn seeded(seed: u64, stream: u64) -> LabRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
