//! Bloom filter with double hashing.
//!
//! Payload: `u32 bits, u32 hashes, ceil(bits/64) u64 words`.

use crate::codec::{check, Reader, Writer};
use crate::error::{Result, SdeError};
use crate::hash::seeded_hash;
use crate::model::Params;

#[derive(Debug, Clone, PartialEq)]
pub struct Bloom {
    bits: usize,
    hashes: u32,
    seeds: [u64; 2],
    words: Vec<u64>,
}

impl Bloom {
    /// `m = ceil(-n ln p / ln^2 2)`, `k = round(m/n ln 2)`.
    pub fn from_params(params: &Params, seeds: Vec<u64>) -> Result<Self> {
        let n = params.u64("elements")?;
        if n == 0 {
            return Err(SdeError::param("elements", "must be positive"));
        }
        let p = params.unit_interval("fpr")?;
        let ln2 = std::f64::consts::LN_2;
        let bits = (-(n as f64) * p.ln() / (ln2 * ln2)).ceil().max(8.0);
        if bits > u32::MAX as f64 {
            return Err(SdeError::param("elements", "filter would exceed 2^32 bits"));
        }
        let bits = bits as usize;
        let hashes = ((bits as f64 / n as f64) * ln2).round().max(1.0) as u32;
        Ok(Bloom {
            bits,
            hashes,
            seeds: [seeds[0], seeds[1]],
            words: vec![0; bits.div_ceil(64)],
        })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn hashes(&self) -> u32 {
        self.hashes
    }

    fn positions(&self, item: &[u8]) -> impl Iterator<Item = usize> + '_ {
        let h1 = seeded_hash(item, self.seeds[0]);
        let h2 = seeded_hash(item, self.seeds[1]) | 1;
        let m = self.bits as u64;
        (0..self.hashes as u64).map(move |i| (h1.wrapping_add(i.wrapping_mul(h2)) % m) as usize)
    }

    pub fn insert(&mut self, item: &[u8]) {
        let pos: Vec<usize> = self.positions(item).collect();
        for p in pos {
            self.words[p / 64] |= 1 << (p % 64);
        }
    }

    pub fn contains(&self, item: &[u8]) -> bool {
        self.positions(item)
            .all(|p| self.words[p / 64] & (1 << (p % 64)) != 0)
    }

    pub fn merge(&mut self, other: &Bloom) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u32(self.bits as u32);
        w.u32(self.hashes);
        for x in &self.words {
            w.u64(*x);
        }
    }

    pub(crate) fn decode(&self, r: &mut Reader) -> Result<Self> {
        check(r.u32()? as usize == self.bits, "bloom size mismatch")?;
        check(r.u32()? == self.hashes, "bloom hash count mismatch")?;
        let mut out = self.clone();
        for x in out.words.iter_mut() {
            *x = r.u64()?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::derive_seeds;
    use proptest::prelude::*;

    fn filter(n: u64, p: f64) -> Bloom {
        Bloom::from_params(
            &Params::new().with("elements", n).with("fpr", p),
            derive_seeds(9, 2),
        )
        .unwrap()
    }

    #[test]
    fn standard_sizing() {
        let b = filter(1000, 0.01);
        assert_eq!(b.bits(), 9586);
        assert_eq!(b.hashes(), 7);
    }

    #[test]
    fn false_positive_rate_near_target() {
        let mut b = filter(10_000, 0.01);
        for i in 0..10_000u32 {
            b.insert(format!("in-{i}").as_bytes());
        }
        let fp = (0..100_000u32)
            .filter(|i| b.contains(format!("out-{i}").as_bytes()))
            .count() as f64
            / 100_000.0;
        assert!(fp < 0.015, "fpr {fp}");
    }

    proptest! {
        #[test]
        fn no_false_negatives(items in proptest::collection::vec(".{0,12}", 1..300)) {
            let mut b = filter(200, 0.05);
            for i in &items {
                b.insert(i.as_bytes());
            }
            for i in &items {
                prop_assert!(b.contains(i.as_bytes()));
            }
        }
    }
}
