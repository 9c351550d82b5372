//! Seeded randomness. Every consumer draws from a ChaCha stream derived from
//! the run seed and a fixed stream id, so components are reproducible on
//! their own regardless of how much randomness the others consume.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SeededRng = ChaCha8Rng;

/// Stream ids used inside the crate.
pub mod stream {
    pub const INIT_PROJECTIONS: u64 = 1;
    pub const INIT_ATTENTION: u64 = 2;
    pub const INIT_ENCODER: u64 = 3;
    pub const INIT_HEAD: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const PROBE_INIT: u64 = 7;
    pub const PROBE_SHUFFLE: u64 = 8;
    pub const GRADIENT_CHECK: u64 = 9;
}

pub fn seeded(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform draw from `[-limit, limit)`.
pub fn symmetric_uniform<R: Rng + ?Sized>(rng: &mut R, limit: f64) -> f64 {
    rng.random_range(-limit..limit)
}

/// Random ordering of `0..n`.
pub fn permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}
