//! Deterministic random streams derived from the run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for a `(seed, labels...)` tuple, e.g.
/// `(seed, epoch, sample index)`.
pub fn stream(seed: u64, labels: &[u64]) -> ChaCha8Rng {
    let mut state = seed;
    let mut acc = splitmix64(&mut state);
    for &l in labels {
        state ^= l.wrapping_mul(0xd6e8_feb8_6659_fd93);
        acc ^= splitmix64(&mut state).rotate_left(17);
    }
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).wrapping_add(acc).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

// Domain tags so streams for different purposes never coincide.
pub(crate) const TAG_INIT: u64 = 1;
pub(crate) const TAG_SHUFFLE: u64 = 2;
pub(crate) const TAG_AUGMENT: u64 = 3;
pub(crate) const TAG_SYNTH: u64 = 4;
pub(crate) const TAG_PROBE: u64 = 5;
