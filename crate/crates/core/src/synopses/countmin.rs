//! Count-Min sketch.
//!
//! Payload: `u32 width, u32 depth, width*depth u64 counters` (row-major).

use crate::codec::{check, Reader, Writer};
use crate::error::Result;
use crate::hash::seeded_hash;
use crate::model::Params;

use super::ceil_usize;

#[derive(Debug, Clone, PartialEq)]
pub struct CountMin {
    width: usize,
    depth: usize,
    seeds: Vec<u64>,
    counters: Vec<u64>,
}

impl CountMin {
    /// `w = ceil(e / epsilon)`, `d = ceil(ln(1 / delta))`.
    pub fn dims(params: &Params) -> Result<(usize, usize)> {
        let eps = params.unit_interval("epsilon")?;
        let delta = params.unit_interval("delta")?;
        Ok((
            ceil_usize(std::f64::consts::E / eps),
            ceil_usize((1.0 / delta).ln()),
        ))
    }

    pub fn new(width: usize, depth: usize, seeds: Vec<u64>) -> Self {
        CountMin {
            width,
            depth,
            seeds,
            counters: vec![0; width * depth],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    #[inline]
    fn cell(&self, row: usize, item: &[u8]) -> usize {
        row * self.width + (seeded_hash(item, self.seeds[row]) % self.width as u64) as usize
    }

    pub fn add(&mut self, item: &[u8], count: u64) {
        for row in 0..self.depth {
            let c = self.cell(row, item);
            self.counters[c] += count;
        }
    }

    pub fn frequency(&self, item: &[u8]) -> u64 {
        (0..self.depth)
            .map(|row| self.counters[self.cell(row, item)])
            .min()
            .unwrap_or(0)
    }

    pub fn merge(&mut self, other: &CountMin) {
        for (a, b) in self.counters.iter_mut().zip(&other.counters) {
            *a += b;
        }
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u32(self.width as u32);
        w.u32(self.depth as u32);
        w.buf.reserve(self.counters.len() * 8);
        for c in &self.counters {
            w.u64(*c);
        }
    }

    pub(crate) fn decode(&self, r: &mut Reader) -> Result<Self> {
        check(r.u32()? as usize == self.width, "count-min width mismatch")?;
        check(r.u32()? as usize == self.depth, "count-min depth mismatch")?;
        let mut out = self.clone();
        for c in out.counters.iter_mut() {
            *c = r.u64()?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::derive_seeds;
    use proptest::prelude::*;

    fn sketch(eps: f64, delta: f64) -> CountMin {
        let p = Params::new().with("epsilon", eps).with("delta", delta);
        let (w, d) = CountMin::dims(&p).unwrap();
        CountMin::new(w, d, derive_seeds(1, d))
    }

    #[test]
    fn sizing_follows_epsilon_and_delta() {
        let p = Params::new().with("epsilon", 0.002).with("delta", 0.01);
        assert_eq!(CountMin::dims(&p).unwrap(), (1360, 5));
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        for (e, d) in [(0.0, 0.1), (1.0, 0.1), (0.1, 0.0), (0.1, 1.5)] {
            let p = Params::new().with("epsilon", e).with("delta", d);
            assert!(CountMin::dims(&p).is_err());
        }
        assert!(CountMin::dims(&Params::new().with("epsilon", 0.1)).is_err());
    }

    #[test]
    fn repeated_item_is_counted_exactly_when_alone() {
        let mut cm = sketch(0.002, 0.01);
        for _ in 0..5 {
            cm.add(b"AAPL", 1);
        }
        assert_eq!(cm.frequency(b"AAPL"), 5);
        assert_eq!(cm.frequency(b"MSFT"), 0);
    }

    proptest! {
        #[test]
        fn never_underestimates(items in proptest::collection::vec(0u16..500, 1..2000)) {
            let mut cm = sketch(0.05, 0.1);
            let mut exact = std::collections::HashMap::new();
            for i in &items {
                cm.add(&i.to_le_bytes(), 1);
                *exact.entry(*i).or_insert(0u64) += 1;
            }
            for (i, c) in exact {
                prop_assert!(cm.frequency(&i.to_le_bytes()) >= c);
            }
        }
    }
}
