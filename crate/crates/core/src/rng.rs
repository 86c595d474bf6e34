//! Named random substreams.
//!
//! Every source of randomness in a run draws from its own ChaCha8 stream,
//! keyed by the root seed, a stream name and an index. Changing how one
//! component consumes random numbers therefore never shifts another
//! component's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Generator for substream `(name, index)` of `root`.
pub fn substream(root: u64, name: &str, index: u64) -> ChaCha8Rng {
    let key = splitmix(splitmix(root) ^ fnv1a(name)) ^ splitmix(index.wrapping_add(0x5851_F42D_4C95_7F2D));
    ChaCha8Rng::seed_from_u64(splitmix(key))
}

/// Generator for substream `(name, a, b)` of `root`.
pub fn substream2(root: u64, name: &str, a: u64, b: u64) -> ChaCha8Rng {
    substream(root, name, splitmix(a) ^ b.rotate_left(32))
}
