//! Named, seeded PCG64 streams.
//!
//! Every stochastic step in training, generation and evaluation draws from a
//! [`Rng`] derived from a run seed plus a stream name, so two components never
//! share a sequence by accident and reruns reproduce bit for bit.

use rand::seq::SliceRandom;
use rand::RngExt;
use rand_distr::{Distribution, Normal};
use rand_pcg::Pcg64;

/// 64-bit FNV-1a, used to turn stream names into stream ids.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct Rng {
    name: String,
    seed: u64,
    stream: u64,
    inner: Pcg64,
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let state = (u128::from(splitmix(seed)) << 64) | u128::from(splitmix(seed ^ 0x5851_f42d));
        Self {
            name: format!("stream-{stream}"),
            seed,
            stream,
            inner: Pcg64::new(state, u128::from(stream)),
        }
    }

    /// A stream identified by name; the same `(seed, name)` always yields the
    /// same sequence.
    pub fn named(seed: u64, name: &str) -> Self {
        let mut rng = Self::new(seed, fnv1a(name.as_bytes()));
        rng.name = name.to_string();
        rng
    }

    /// Child stream keyed by this stream's seed and a sub-name.
    pub fn fork(&self, name: &str) -> Self {
        Self::named(self.seed, &format!("{}/{}", self.name, name))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform in `[lo, hi)`; returns `lo` when the interval is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        self.inner.random_range(lo..hi)
    }

    pub fn uniform_f32(&mut self, lo: f32, hi: f32) -> f32 {
        if hi <= lo {
            return lo;
        }
        self.inner.random_range(lo..hi)
    }

    pub fn normal_f32(&mut self, mean: f32, std: f32) -> f32 {
        Normal::new(mean, std).expect("finite std").sample(&mut self.inner)
    }

    /// Uniform index in `0..n`. Panics when `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.inner.random_bool(p.clamp(0.0, 1.0))
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn choose<'a, T>(&mut self, items: &'a [T]) -> Option<&'a T> {
        if items.is_empty() {
            None
        } else {
            Some(&items[self.below(items.len())])
        }
    }

    /// A random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}
