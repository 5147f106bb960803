//! Stable hashing and seed plumbing.
//!
//! Everything that routes records or hashes items inside a sketch goes through
//! XXH64. Routing uses seed 0; sketches use per-row seeds expanded from the
//! synopsis `seed` parameter so that two sites building the same spec end up
//! with bit-identical hash families.

use rand::RngCore;
use xxhash_rust::xxh64::xxh64;

/// Seed used for routing keys.
pub const ROUTING_SEED: u64 = 0;

/// Default master seed when a spec does not carry one.
pub const DEFAULT_SEED: u64 = 0x5DE5_EED0;

/// XXH64 of the UTF-8 bytes with seed 0. Identical on every platform.
pub fn stable_hash(s: &str) -> u64 {
    xxh64(s.as_bytes(), ROUTING_SEED)
}

pub fn seeded_hash(bytes: &[u8], seed: u64) -> u64 {
    xxh64(bytes, seed)
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Expands a master seed into `count` independent 64-bit seeds (SplitMix64).
pub fn derive_seeds(master: u64, count: usize) -> Vec<u64> {
    let mut state = master;
    (0..count)
        .map(|_| {
            state = state.wrapping_add(GOLDEN_GAMMA);
            mix64(state)
        })
        .collect()
}

/// Counter-based generator whose whole state is two integers, so sketches that
/// flip coins (sticky sampling, chain sampling) serialize exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    pub seed: u64,
    pub counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed, counter: 0 }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[1, n]`.
    pub fn one_to(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        1 + self.next_u64() % n
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.seed ^ self.counter.wrapping_mul(GOLDEN_GAMMA))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}

/// Arithmetic modulo the Mersenne prime 2^61 - 1.
pub mod mersenne {
    pub const P: u64 = (1 << 61) - 1;

    #[inline]
    pub fn reduce(x: u128) -> u64 {
        let lo = (x as u64) & P;
        let hi = (x >> 61) as u64;
        let mut r = lo + (hi & P) + ((x >> 122) as u64);
        while r >= P {
            r -= P;
        }
        r
    }

    #[inline]
    pub fn mul(a: u64, b: u64) -> u64 {
        reduce(a as u128 * b as u128)
    }

    #[inline]
    pub fn add(a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= P {
            s - P
        } else {
            s
        }
    }

    /// Horner evaluation of `coeffs[0] + coeffs[1] x + ...` mod P.
    #[inline]
    pub fn poly(coeffs: &[u64], x: u64) -> u64 {
        coeffs.iter().rev().fold(0, |acc, &c| add(mul(acc, x), c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_string_digest_is_the_published_xxh64_value() {
        assert_eq!(stable_hash(""), 0xEF46_DB37_51D8_E999);
    }

    #[test]
    fn stable_hash_is_deterministic() {
        for s in ["", "AAPL", "a much longer stream identifier", "ü"] {
            assert_eq!(stable_hash(s), stable_hash(s));
        }
        assert_ne!(stable_hash("AAPL"), stable_hash("MSFT"));
    }

    #[test]
    fn shard_occupancy_is_balanced() {
        let mut rng = CounterRng::new(99);
        let mut counts = [0u64; 8];
        for _ in 0..100_000 {
            let id = format!("stream-{:016x}", rng.next_u64());
            counts[(stable_hash(&id) % 8) as usize] += 1;
        }
        let max = *counts.iter().max().unwrap() as f64;
        let min = *counts.iter().min().unwrap() as f64;
        assert!(max / min < 1.2, "occupancy {counts:?}");
    }

    #[test]
    fn derived_seeds_are_distinct_and_reproducible() {
        let a = derive_seeds(7, 16);
        assert_eq!(a, derive_seeds(7, 16));
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 16);
        assert_ne!(derive_seeds(8, 1), derive_seeds(7, 1));
    }

    #[test]
    fn mersenne_reduce_matches_u128_modulo() {
        let mut rng = CounterRng::new(1);
        for _ in 0..10_000 {
            let a = rng.next_u64() % mersenne::P;
            let b = rng.next_u64() % mersenne::P;
            let expect = ((a as u128 * b as u128) % mersenne::P as u128) as u64;
            assert_eq!(mersenne::mul(a, b), expect);
        }
    }

    #[test]
    fn counter_rng_unit_in_range() {
        let mut rng = CounterRng::new(3);
        let mean: f64 = (0..10_000).map(|_| rng.unit()).sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() < 0.02);
    }
}
