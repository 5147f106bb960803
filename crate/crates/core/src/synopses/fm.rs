//! Flajolet-Martin distinct counting with stochastic averaging over `L` bitmaps.
//!
//! Payload: `u32 bitmap_size, u32 L, L u64 bitmaps`.

use crate::codec::{check, Reader, Writer};
use crate::error::{Result, SdeError};
use crate::hash::seeded_hash;
use crate::model::Params;

use super::ceil_usize;

pub const PHI: f64 = 0.77;

#[derive(Debug, Clone, PartialEq)]
pub struct Fm {
    bitmap_size: u32,
    seed: u64,
    bitmaps: Vec<u64>,
}

impl Fm {
    /// `bitmapSize` (default 32, at most 64). With `epsilon` and `delta`,
    /// `L = ceil(0.78^2 / (epsilon^2 delta))` bitmaps; otherwise one.
    pub fn from_params(params: &Params, seed: u64) -> Result<Self> {
        let size = params.opt_u64("bitmapSize")?.unwrap_or(32);
        if !(1..=64).contains(&size) {
            return Err(SdeError::param("bitmapSize", "must lie in [1, 64]"));
        }
        let count = match (params.get("epsilon"), params.get("delta")) {
            (None, None) => 1,
            _ => {
                let eps = params.unit_interval("epsilon")?;
                let delta = params.unit_interval("delta")?;
                ceil_usize(0.78 * 0.78 / (eps * eps * delta))
            }
        };
        if count > 1 << 24 {
            return Err(SdeError::param("epsilon", "needs too many bitmaps"));
        }
        Ok(Fm {
            bitmap_size: size as u32,
            seed,
            bitmaps: vec![0; count],
        })
    }

    pub fn bitmap_count(&self) -> usize {
        self.bitmaps.len()
    }

    pub fn bitmaps(&self) -> &[u64] {
        &self.bitmaps
    }

    pub fn add(&mut self, item: &[u8]) {
        let h = seeded_hash(item, self.seed);
        let l = self.bitmaps.len() as u64;
        let j = (h % l) as usize;
        let rest = h / l;
        let rho = rest.trailing_zeros().min(self.bitmap_size - 1);
        self.bitmaps[j] |= 1 << rho;
    }

    /// Position of the lowest unset bit.
    fn r(&self, b: u64) -> u32 {
        (!b).trailing_zeros().min(self.bitmap_size)
    }

    pub fn estimate(&self) -> f64 {
        if self.bitmaps.iter().all(|&b| b == 0) {
            return 0.0;
        }
        let l = self.bitmaps.len() as f64;
        let mean = self.bitmaps.iter().map(|&b| self.r(b) as f64).sum::<f64>() / l;
        l / PHI * mean.exp2()
    }

    pub fn merge(&mut self, other: &Fm) {
        for (a, b) in self.bitmaps.iter_mut().zip(&other.bitmaps) {
            *a |= b;
        }
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u32(self.bitmap_size);
        w.u32(self.bitmaps.len() as u32);
        for b in &self.bitmaps {
            w.u64(*b);
        }
    }

    pub(crate) fn decode(&self, r: &mut Reader) -> Result<Self> {
        check(r.u32()? == self.bitmap_size, "fm bitmap size mismatch")?;
        check(r.u32()? as usize == self.bitmaps.len(), "fm bitmap count mismatch")?;
        let mut out = self.clone();
        for b in out.bitmaps.iter_mut() {
            *b = r.u64()?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bitmap_uses_lowest_unset_bit() {
        let mut fm = Fm::from_params(&Params::new(), 5).unwrap();
        assert_eq!(fm.bitmap_count(), 1);
        fm.bitmaps[0] = 0b0111;
        assert!((fm.estimate() - 8.0 / PHI).abs() < 1e-12);
        fm.bitmaps[0] = 0b1011;
        assert!((fm.estimate() - 4.0 / PHI).abs() < 1e-12);
    }

    #[test]
    fn averaged_estimate_is_close() {
        let p = Params::new().with("epsilon", 0.1).with("delta", 0.2);
        let mut fm = Fm::from_params(&p, 11).unwrap();
        assert_eq!(fm.bitmap_count(), 305);
        for i in 0..50_000u32 {
            fm.add(&i.to_le_bytes());
        }
        let rel = (fm.estimate() - 50_000.0).abs() / 50_000.0;
        assert!(rel < 0.15, "relative error {rel}");
    }

    #[test]
    fn duplicates_do_not_change_the_state() {
        let mut fm = Fm::from_params(&Params::new().with("bitmapSize", 16), 1).unwrap();
        fm.add(b"a");
        let once = fm.clone();
        fm.add(b"a");
        assert_eq!(fm, once);
    }
}
