//! Seeded random streams.
//!
//! Every random decision derives from a `(seed, stream)` pair so batch work
//! can run in any order, or in parallel, and still reproduce bit-for-bit.
//! ChaCha8 is used because its output is fixed across platforms and releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type MixRng = ChaCha8Rng;

/// Stream reserved for seeded farthest-point-sampling starts.
pub const FPS_STREAM: u64 = u64::MAX;
/// Stream reserved for batch pair selection.
pub const PAIRING_STREAM: u64 = u64::MAX - 1;

/// Independent generator for stream `stream` under `seed`.
pub fn stream(seed: u64, stream: u64) -> MixRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
