//! Counter-based random streams.
//!
//! Every Monte Carlo path owns a ChaCha8 stream selected by its path index
//! under one master seed. Path `i` therefore sees the same variates whether
//! it runs on one thread or sixteen.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::special::inverse_normal_cdf;

/// Source of standard normal variates.
pub trait NormalSource {
    fn next_normal(&mut self) -> f64;
}

/// Reproducible per-path stream: `(master_seed, path_index)` fully determines it.
#[derive(Clone, Debug)]
pub struct PathRng {
    inner: ChaCha8Rng,
}

impl PathRng {
    pub fn new(master_seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Uniform on the open interval (0, 1), 53 bits of resolution.
    #[inline]
    pub fn next_open_uniform(&mut self) -> f64 {
        let bits = self.inner.next_u64() >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

impl NormalSource for PathRng {
    #[inline]
    fn next_normal(&mut self) -> f64 {
        inverse_normal_cdf(self.next_open_uniform())
    }
}

/// Always returns zero. Useful for mean-path checks.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroNormals;

impl NormalSource for ZeroNormals {
    fn next_normal(&mut self) -> f64 {
        0.0
    }
}

/// Replays a fixed sequence of variates, then panics when exhausted.
#[derive(Clone, Debug)]
pub struct FixedNormals<'a> {
    values: &'a [f64],
    pos: usize,
}

impl<'a> FixedNormals<'a> {
    pub fn new(values: &'a [f64]) -> Self {
        Self { values, pos: 0 }
    }
}

impl NormalSource for FixedNormals<'_> {
    fn next_normal(&mut self) -> f64 {
        let z = self.values[self.pos];
        self.pos += 1;
        z
    }
}
