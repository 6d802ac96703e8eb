//! Seed handling and uniform variate generation.
//!
//! All randomness in the crate flows from a single root `u64` seed. Each
//! consumer derives its own independent stream by mixing the root seed with a
//! list of tags (a stream name plus integer coordinates such as station index
//! or day number), so adding a consumer never perturbs the draws of another.
//! Streams are ChaCha12 generators; callers draw uniforms and map them
//! through quantile functions — no other variate source exists.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

/// One step of the splitmix64 output function; good avalanche, cheap.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a hash of a stream name, so tags can be human-readable.
pub fn name_tag(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in name.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

/// Mixes a root seed with a sequence of tags into a derived stream seed.
pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix64(root);
    for &t in tags {
        s = splitmix64(s ^ t);
    }
    s
}

/// ChaCha12 stream for `(root, tags)`; same inputs always give the same stream.
pub fn stream(root: u64, tags: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(root, tags))
}

/// Uniform draw on the open interval (0, 1).
///
/// 53 random bits placed at the midpoints of a 2^53 grid: the result can be
/// neither 0 nor 1, so it is always a valid quantile-function argument.
pub fn uniform_open01<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}
