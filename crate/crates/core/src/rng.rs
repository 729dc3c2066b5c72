//! Per-path random substreams.
//!
//! Every path index gets its own ChaCha8 stream for each purpose, so a path's
//! draws never depend on which worker ran it or how many paths ran before.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a substream is used for. Each purpose has its own key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Driver,
    Bridge,
    Defaults,
    Randomization,
    Oracle,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Driver => 0x5d1e_a5e5_0000_0001,
            Purpose::Bridge => 0x5d1e_a5e5_0000_0002,
            Purpose::Defaults => 0x5d1e_a5e5_0000_0003,
            Purpose::Randomization => 0x5d1e_a5e5_0000_0004,
            Purpose::Oracle => 0x5d1e_a5e5_0000_0005,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream for (`seed`, `purpose`, `path`).
pub fn substream(seed: u64, purpose: Purpose, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ purpose.tag()));
    rng.set_stream(path);
    rng
}

/// Uniform in the open interval (0, 1) from one 64-bit word.
#[inline]
pub fn open_unit(word: u64) -> f64 {
    ((word >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Random-access uniform: the `index`-th word of the stream, mapped to (0, 1).
pub fn uniform_at(rng: &mut ChaCha8Rng, index: u64) -> f64 {
    rng.set_word_pos(u128::from(index) * 2);
    open_unit(rng.next_u64())
}
