//! Seeded pseudo-random streams.
//!
//! Every stochastic step (data synthesis, prior selection, initialization,
//! pair sampling) draws from xoshiro256++ seeded through SplitMix64, both of
//! which have published reference outputs.

use rand::{Rng as _, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> Rng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Independent stream for a named purpose under a base seed.
pub fn derived(seed: u64, stream: u64) -> Rng {
    seeded(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Partial Fisher-Yates: after the call, `items[..k]` is a uniform random
/// `k`-subset of `items` in random order.
pub fn shuffle_prefix<T>(rng: &mut Rng, items: &mut [T], k: usize) {
    let n = items.len();
    for i in 0..k.min(n) {
        let j = i + rng.gen_range(0..(n - i) as u64) as usize;
        items.swap(i, j);
    }
}
