//! Seeded randomness. Every stochastic operation draws from a [`SeedRng`]
//! in a fixed order, so a run is reproducible from its seed alone.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numerics::Matrix;

#[derive(Clone, Debug)]
pub struct SeedRng {
    inner: ChaCha8Rng,
}

/// SplitMix64 finalizer; decorrelates derived seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedRng {
    pub fn new(seed: u64) -> Self {
        SeedRng { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent stream derived from `(seed, salt)`.
    pub fn derived(seed: u64, salt: u64) -> Self {
        Self::new(mix_seed(seed, salt))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| self.normal())
    }

    pub fn bernoulli_matrix(&mut self, rows: usize, cols: usize, p: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| if self.bernoulli(p) { 1.0 } else { 0.0 })
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }

    /// Access for `rand_distr` samplers.
    pub fn raw(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}
