//! AMS sketch in its hashed form: each row maps an item to one bucket and adds
//! the item's weight times a four-wise independent sign.
//!
//! Payload: `u32 width, u32 depth, width*depth i64 counters` (row-major).

use crate::codec::{check, Reader, Writer};
use crate::error::{Result, SdeError};
use crate::hash::{mersenne, seeded_hash};
use crate::model::Params;

use super::ceil_usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Ams {
    width: usize,
    depth: usize,
    item_seed: u64,
    /// Per row: four sign coefficients then two bucket coefficients, all mod P.
    rows: Vec<[u64; 6]>,
    counters: Vec<i64>,
}

impl Ams {
    /// `w = ceil(4 / epsilon^2)`, `d = ceil(ln(1 / delta))`.
    pub fn dims(params: &Params) -> Result<(usize, usize)> {
        let eps = params.unit_interval("epsilon")?;
        let delta = params.unit_interval("delta")?;
        let w = ceil_usize(4.0 / (eps * eps));
        let d = ceil_usize((1.0 / delta).ln());
        if w.saturating_mul(d) > 1 << 26 {
            return Err(SdeError::param("epsilon", "sketch would exceed 2^26 counters"));
        }
        Ok((w, d))
    }

    pub fn new(width: usize, depth: usize, seeds: &[u64]) -> Self {
        let rows = (0..depth)
            .map(|r| {
                let mut c = [0u64; 6];
                for (i, x) in c.iter_mut().enumerate() {
                    *x = seeds[1 + 6 * r + i] % mersenne::P;
                }
                c
            })
            .collect();
        Ams {
            width,
            depth,
            item_seed: seeds[0],
            rows,
            counters: vec![0; width * depth],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn add(&mut self, item: &[u8], weight: i64) {
        let x = seeded_hash(item, self.item_seed) % mersenne::P;
        for r in 0..self.depth {
            let c = &self.rows[r];
            let sign = if mersenne::poly(&c[..4], x) & 1 == 1 { 1 } else { -1 };
            let bucket = (mersenne::poly(&c[4..], x) % self.width as u64) as usize;
            self.counters[r * self.width + bucket] += sign * weight;
        }
    }

    fn row(&self, r: usize) -> &[i64] {
        &self.counters[r * self.width..(r + 1) * self.width]
    }

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        }
    }

    /// Estimate of the second frequency moment.
    pub fn self_join(&self) -> f64 {
        Self::median(
            (0..self.depth)
                .map(|r| self.row(r).iter().map(|&c| (c as i128) * (c as i128)).sum::<i128>() as f64)
                .collect(),
        )
    }

    pub fn inner_product(&self, other: &Ams) -> f64 {
        Self::median(
            (0..self.depth)
                .map(|r| {
                    self.row(r)
                        .iter()
                        .zip(other.row(r))
                        .map(|(&a, &b)| a as i128 * b as i128)
                        .sum::<i128>() as f64
                })
                .collect(),
        )
    }

    pub fn merge(&mut self, other: &Ams) {
        for (a, b) in self.counters.iter_mut().zip(&other.counters) {
            *a += b;
        }
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u32(self.width as u32);
        w.u32(self.depth as u32);
        w.buf.reserve(self.counters.len() * 8);
        for c in &self.counters {
            w.i64(*c);
        }
    }

    pub(crate) fn decode(&self, r: &mut Reader) -> Result<Self> {
        check(r.u32()? as usize == self.width, "ams width mismatch")?;
        check(r.u32()? as usize == self.depth, "ams depth mismatch")?;
        let mut out = self.clone();
        for c in out.counters.iter_mut() {
            *c = r.i64()?;
        }
        Ok(out)
    }
}
