//! Deterministic per-frame random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stream for frame `n` of sampling pass `epoch`. Streams for distinct
/// `(seed, epoch, n)` never overlap, so frames can be processed in any order.
pub(crate) fn frame_rng(seed: u64, epoch: u64, n: usize) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(epoch.wrapping_add(0x5851_F42D_4C95_7F2D)));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(n as u64);
    rng
}

/// Well-known epochs for passes that are not EM iterations.
pub(crate) mod epoch {
    pub const CHAIN_INIT: u64 = u64::MAX;
    pub const RECONSTRUCTION: u64 = u64::MAX - 1;
    pub const PARAM_INIT: u64 = u64::MAX - 2;
    pub const GENERATE: u64 = u64::MAX - 3;
}
