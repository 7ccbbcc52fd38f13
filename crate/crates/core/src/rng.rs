//! Seeded random streams. Every stochastic routine takes a seed and derives
//! independent ChaCha streams from it; nothing reads the wall clock.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

/// Stream `stream` of the generator keyed by `seed`.
pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Packs a purpose tag and an index into one stream id.
pub fn tagged(tag: u32, index: u64) -> u64 {
    ((tag as u64) << 40) ^ index
}

/// Child seed for sub-experiment `index` of kind `tag`.
pub fn derive(seed: u64, tag: u32, index: u64) -> u64 {
    stream(seed, tagged(tag, index)).random()
}

/// Short hex digest used for stream checksums.
pub fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub mod tags {
    pub const META_DATA: u32 = 1;
    pub const TARGET_PILOTS: u32 = 2;
    pub const EVAL: u32 = 3;
    pub const SPLIT: u32 = 4;
    pub const INIT: u32 = 5;
    pub const REALIZATION: u32 = 6;
}
