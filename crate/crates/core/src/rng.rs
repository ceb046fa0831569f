//! Seeded RNG streams. Every consumer gets its own ChaCha stream so adding
//! draws in one place never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    ChannelAb = 1,
    ChannelAe = 2,
    ChannelBe = 3,
    Evolution = 4,
    Secret = 5,
    Noise = 6,
    Attack = 7,
    Replay = 8,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Stream for sub-task `index` of `which`, e.g. one k-means restart.
pub fn substream(seed: u64, which: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(((which as u64) << 32) | (index & 0xFFFF_FFFF));
    rng
}
