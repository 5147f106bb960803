//! HyperLogLog over 64-bit hashes.
//!
//! Payload: `u8 m, 2^m u8 registers`.

use crate::codec::{check, Reader, Writer};
use crate::error::{Result, SdeError};
use crate::hash::seeded_hash;
use crate::model::Params;

const TWO_64: f64 = 18_446_744_073_709_551_616.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Hll {
    m: u8,
    seed: u64,
    registers: Vec<u8>,
}

impl Hll {
    /// Takes `m` (2^m registers, 1..=18) or a target relative standard error `rse`.
    pub fn from_params(params: &Params, seed: u64) -> Result<Self> {
        let m = match (params.opt_u64("m")?, params.opt_f64("rse")?) {
            (Some(m), _) => m,
            (None, Some(rse)) if rse > 0.0 && rse < 1.0 => {
                (1.04 / rse).powi(2).log2().ceil().max(1.0) as u64
            }
            (None, Some(_)) => return Err(SdeError::param("rse", "must lie in (0, 1)")),
            (None, None) => return Err(SdeError::param("m", "missing")),
        };
        if !(1..=18).contains(&m) {
            return Err(SdeError::param("m", "must lie in [1, 18]"));
        }
        Ok(Hll {
            m: m as u8,
            seed,
            registers: vec![0; 1 << m],
        })
    }

    pub fn registers(&self) -> &[u8] {
        &self.registers
    }

    pub fn add(&mut self, item: &[u8]) {
        let h = seeded_hash(item, self.seed);
        let m = self.m as u32;
        let idx = (h >> (64 - m)) as usize;
        let rest = h << m;
        let cap = 64 - m + 1;
        let rho = if rest == 0 {
            cap
        } else {
            (rest.leading_zeros() + 1).min(cap)
        };
        let r = &mut self.registers[idx];
        *r = (*r).max(rho as u8);
    }

    fn alpha(count: usize) -> f64 {
        match count {
            16 => 0.673,
            32 => 0.697,
            64 => 0.709,
            n => 0.7213 / (1.0 + 1.079 / n as f64),
        }
    }

    /// Harmonic-mean estimate with linear counting for small cardinalities and
    /// the 64-bit large-range correction.
    pub fn estimate(&self) -> f64 {
        let count = self.registers.len() as f64;
        let sum: f64 = self.registers.iter().map(|&r| (-(r as f64)).exp2()).sum();
        let raw = Self::alpha(self.registers.len()) * count * count / sum;
        let zeros = self.registers.iter().filter(|&&r| r == 0).count();
        if raw <= 2.5 * count && zeros > 0 {
            count * (count / zeros as f64).ln()
        } else if raw > TWO_64 / 30.0 {
            -TWO_64 * (1.0 - raw / TWO_64).ln()
        } else {
            raw
        }
    }

    pub fn merge(&mut self, other: &Hll) {
        for (a, b) in self.registers.iter_mut().zip(&other.registers) {
            *a = (*a).max(*b);
        }
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u8(self.m);
        w.buf.extend_from_slice(&self.registers);
    }

    pub(crate) fn decode(&self, r: &mut Reader) -> Result<Self> {
        check(r.u8()? == self.m, "hll m mismatch")?;
        let mut out = self.clone();
        for x in out.registers.iter_mut() {
            *x = r.u8()?;
            check(*x as u32 <= 65 - self.m as u32, "hll register out of range")?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn register_count_is_two_to_the_m() {
        let h = Hll::from_params(&Params::new().with("m", 3), 0).unwrap();
        assert_eq!(h.registers(), &[0; 8]);
        let h = Hll::from_params(&Params::new().with("rse", 0.01), 0).unwrap();
        assert_eq!(h.registers().len(), 1 << 14);
    }

    #[test]
    fn merge_takes_register_max() {
        let p = Params::new().with("m", 4);
        let mut a = Hll::from_params(&p, 2).unwrap();
        let mut b = Hll::from_params(&p, 2).unwrap();
        for i in 0..300u32 {
            a.add(&i.to_le_bytes());
            b.add(&(i + 1000).to_le_bytes());
        }
        let expect: Vec<u8> = a
            .registers()
            .iter()
            .zip(b.registers())
            .map(|(x, y)| *x.max(y))
            .collect();
        a.merge(&b);
        assert_eq!(a.registers(), &expect[..]);
    }

    proptest! {
        #[test]
        fn duplicates_never_lower_a_register(items in proptest::collection::vec(any::<u32>(), 1..200)) {
            let mut h = Hll::from_params(&Params::new().with("m", 6), 3).unwrap();
            for i in &items {
                h.add(&i.to_le_bytes());
                let before = h.registers().to_vec();
                h.add(&i.to_le_bytes());
                for (x, y) in before.iter().zip(h.registers()) {
                    prop_assert!(y >= x);
                }
            }
        }
    }
}
