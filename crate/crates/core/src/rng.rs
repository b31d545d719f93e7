//! Reproducible random streams.
//!
//! Every stochastic step in the toolkit draws from an [`Rng`] identified by a
//! `(seed, stream)` pair. The generator is ChaCha8, whose output is fixed by
//! its key and stream and does not depend on the platform word size.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng {
            seed,
            stream,
            inner,
        }
    }

    /// Stream keyed by a string label, e.g. a sample id.
    pub fn keyed(seed: u64, key: &[u8]) -> Self {
        Rng::new(seed, fnv1a(key))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `[0, n)`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Uniform real in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        Normal::new(mean, std)
            .expect("finite, non-negative std")
            .sample(&mut self.inner)
    }

    /// Forward Fisher-Yates restricted to the first `m` positions.
    ///
    /// After the call `items[..m]` is a uniform draw without replacement, and
    /// it is the same prefix a full shuffle with the same stream would give.
    pub fn partial_shuffle<T>(&mut self, items: &mut [T], m: usize) {
        let n = items.len();
        for i in 0..m.min(n.saturating_sub(1)) {
            let j = i + self.below(n - i);
            items.swap(i, j);
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        let n = items.len();
        self.partial_shuffle(items, n);
    }

    /// Uniform random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}

/// 64-bit FNV-1a, used to turn labels into stream ids.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
