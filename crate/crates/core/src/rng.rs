//! Counter-keyed random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator whose key
//! is derived from a user seed plus a tuple of counters (for example the
//! precision index and the replicate index). Results therefore do not depend
//! on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as KeyedRng;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator keyed by `(seed, counters...)`.
pub fn keyed_rng(seed: u64, counters: &[u64]) -> ChaCha8Rng {
    let mut state = seed;
    let mut mixed = splitmix64(&mut state);
    for &c in counters {
        state ^= c.wrapping_mul(0xD6E8_FEB8_6659_FD93).rotate_left(17);
        mixed ^= splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).wrapping_add(mixed).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
