//! Reproducible random streams keyed by `(seed, path, segment)`.
//!
//! The key is expanded into a ChaCha8 key; path and segment indices select the
//! 64-bit stream, so every path (and every crossing-construction segment) gets
//! its own noise regardless of scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Distinct stream families derived from the same user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Path,
    Crossing,
    HittingTime,
    StationarySample,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Path => 0x7061_7468,
            Purpose::Crossing => 0x6372_6f73,
            Purpose::HittingTime => 0x6869_7474,
            Purpose::StationarySample => 0x7361_6d70,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `(seed, purpose, path, segment)`.
///
/// `path` and `segment` must each fit in 32 bits.
pub fn stream(seed: u64, purpose: Purpose, path: u64, segment: u64) -> ChaCha8Rng {
    debug_assert!(path <= u32::MAX as u64 && segment <= u32::MAX as u64);
    let mut state = seed ^ purpose.tag().rotate_left(32);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream((path << 32) | (segment & 0xFFFF_FFFF));
    rng
}
