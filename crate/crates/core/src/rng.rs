//! Seed derivation. One master seed fans out into named streams; each
//! stream hands out `base + index` seeds to its workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type LabRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Base seed of the named stream under `master`.
pub fn stream_seed(master: u64, stream: &str) -> u64 {
    stream
        .bytes()
        .fold(splitmix64(master), |acc, b| splitmix64(acc ^ u64::from(b)))
}

/// Generator of worker `index` in a stream with base seed `base`.
pub fn worker_rng(base: u64, index: u64) -> LabRng {
    LabRng::seed_from_u64(base.wrapping_add(index))
}
