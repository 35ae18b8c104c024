//! Counter-based random streams.
//!
//! A stream is a ChaCha8 generator whose 256-bit key is the tuple
//! `(seed, purpose, a, b)`. Drawing from the stream for node `i` at step `t`
//! therefore never depends on how many other draws happened before it, which
//! keeps runs reproducible regardless of call order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    ProblemData = 0x5052_4f42,
    InitialIterate = 0x494e_4954,
    GradientNoise = 0x4e4f_4953,
}

pub fn stream(seed: u64, purpose: Purpose, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    key[16..24].copy_from_slice(&a.to_le_bytes());
    key[24..32].copy_from_slice(&b.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
