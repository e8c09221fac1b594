//! Reproducible random streams.
//!
//! Every random stream in the crate is a ChaCha8 generator whose 256-bit key
//! is four consecutive SplitMix64 outputs, little-endian, starting from a
//! 64-bit sub-seed. The sub-seed of stream `index` in `domain` is
//!
//! ```text
//! sub_seed = mix(mix(master_seed ^ domain) ^ index)
//! ```
//!
//! where `mix` is the SplitMix64 finalizer applied after adding the golden
//! gamma. Streams depend only on `(master_seed, domain, index)`, never on
//! thread scheduling, so sharded and sequential work produce the same values.
//!
//! Draw conventions (shared by all samplers):
//! * uniform `[0, 1)`: `(next_u64 >> 11) * 2^-53`
//! * uniform integer in `0..m`: `(next_u64 as u128 * m) >> 64`

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream families. Distinct domains never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Tree = 0x7472_6565,
    Config = 0x636f_6e66,
    Split = 0x7370_6c69,
    ToyRun = 0x746f_7972,
    Test = 0x7465_7374,
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn sub_seed(master_seed: u64, domain: Domain, index: u64) -> u64 {
    mix(mix(master_seed ^ domain as u64) ^ index)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&mix(state).to_le_bytes());
        state = state.wrapping_add(GOLDEN_GAMMA);
    }
    ChaCha8Rng::from_seed(key)
}

pub fn stream(master_seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    rng_from_seed(sub_seed(master_seed, domain, index))
}

#[inline]
pub fn uniform01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
pub fn uniform_index<R: RngCore + ?Sized>(rng: &mut R, m: usize) -> usize {
    ((rng.next_u64() as u128 * m as u128) >> 64) as usize
}

/// Fisher-Yates shuffle driven by [`uniform_index`].
pub fn shuffle<T, R: RngCore + ?Sized>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = uniform_index(rng, i + 1);
        items.swap(i, j);
    }
}
