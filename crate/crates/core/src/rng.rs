//! Counter-based random streams.
//!
//! Every random draw in the simulator comes from a stream addressed by
//! `(master seed, domain, lane, counter)`. The four words are folded through
//! SplitMix64 into a 256-bit ChaCha8 key, so stream `(d, j, t)` depends only on
//! its address and never on the order in which streams are created. This is
//! what makes Monte Carlo results identical for any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named stream families. Distinct domains never share a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    Synthetic = 1,
    Grouping = 2,
    TieBreak = 3,
    Remainder = 4,
    Pool = 5,
    GradientNoise = 6,
    Oracle = 7,
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic RNG for one `(domain, lane, counter)` address under `master`.
pub fn stream(master: u64, domain: Domain, lane: u64, counter: u64) -> ChaCha8Rng {
    let mut state = master;
    let mut key = [0u8; 32];
    let words = [domain as u64, lane, counter, 0x5EED_FAC7_u64];
    for (chunk, word) in key.chunks_exact_mut(8).zip(words) {
        state ^= word;
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
