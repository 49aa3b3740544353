//! Seeded randomness with a fixed, documented algorithm.
//!
//! Every random choice in the crate (corpus splits, negative sampling,
//! synthetic query rules, parameter initialization, epoch shuffles) goes
//! through [`SeededRng`]. The generator is ChaCha8 keyed with the 64-bit seed
//! in little-endian order in the first eight key bytes (remaining key bytes
//! zero), with the ChaCha stream id used to separate independent streams.
//! Integer ranges use rejection sampling and floats take the top 53 bits of a
//! `u64`, so outputs do not depend on `rand` version details or platform.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use xxhash_rust::xxh64::xxh64;

/// Deterministic random stream.
#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    /// Stream 0 for `seed`.
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// An independent stream for `seed`. Different stream ids never overlap.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream);
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        // Largest multiple of n that fits, to reject the biased tail.
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    pub fn below_usize(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    /// Uniform float in `[0, 1)`.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Fisher-Yates shuffle, iterating from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below_usize(i + 1);
            items.swap(i, j);
        }
    }

    /// `count` distinct indices from `0..n`, in draw order (partial Fisher-Yates).
    pub fn sample_indices(&mut self, n: usize, count: usize) -> Vec<usize> {
        assert!(count <= n, "cannot sample {count} of {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.below_usize(n - i);
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }
}

/// Derives a child seed from a base seed and a path of labels.
///
/// Uses xxHash64 over the little-endian encoding of each component, so the
/// mapping is stable across platforms.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut bytes = Vec::with_capacity(8 * (parts.len() + 1));
    bytes.extend_from_slice(&base.to_le_bytes());
    for p in parts {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    xxh64(&bytes, 0x7166_696e_6500_0001)
}

/// Seed component for a string label.
pub fn label_seed(label: &str) -> u64 {
    xxh64(label.as_bytes(), 0)
}
