//! Seeded random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from the
//! master seed, so adding draws in one place never shifts another.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream ids. Node agents use `AGENT_BASE + node`.
pub mod stream {
    pub const TOPOLOGY: u64 = 1;
    pub const FLOWS: u64 = 2;
    pub const MAC: u64 = 3;
    pub const PAYLOAD: u64 = 4;
    pub const ARRIVALS_BASE: u64 = 1 << 20;
    pub const AGENT_BASE: u64 = 1 << 32;
}

pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for repetition `index` of an experiment whose master seed is `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(0xC0DE_5EED);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}
