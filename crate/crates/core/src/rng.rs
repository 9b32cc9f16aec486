//! Seeded random streams.
//!
//! Every consumer of randomness derives its own generator from the run seed
//! and a short path of integers, so adding a consumer never shifts another
//! one's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type DetRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for `seed` and the stream path `path`.
pub fn stream(seed: u64, path: &[u64]) -> DetRng {
    let mut h = splitmix(seed);
    for &p in path {
        h = splitmix(h ^ splitmix(p));
    }
    DetRng::seed_from_u64(h)
}
