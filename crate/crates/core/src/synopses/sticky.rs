//! Sticky sampling of frequent items.
//!
//! Payload: `u64 n, u64 rate, u64 rng_counter, u32 entries, {item, u64 count}*`.

use std::collections::BTreeMap;

use crate::codec::{check, Reader, Writer};
use crate::error::{Result, SdeError};
use crate::hash::CounterRng;
use crate::model::Params;

use super::lossy::frequent_from;
use super::ItemCount;

#[derive(Debug, Clone, PartialEq)]
pub struct StickySampling {
    support: f64,
    epsilon: f64,
    t: u64,
    n: u64,
    rate: u64,
    rng: CounterRng,
    entries: BTreeMap<String, u64>,
}

impl StickySampling {
    /// `support` s, `epsilon`, `delta`; `t = ceil(ln(1/(s delta)) / epsilon)`.
    pub fn from_params(params: &Params, seed: u64) -> Result<Self> {
        let support = params.unit_interval("support")?;
        let epsilon = params.unit_interval("epsilon")?;
        let delta = params.unit_interval("delta")?;
        if epsilon >= support {
            return Err(SdeError::param("epsilon", "must be smaller than support"));
        }
        let t = ((1.0 / (support * delta)).ln() / epsilon).ceil().max(1.0) as u64;
        Ok(StickySampling {
            support,
            epsilon,
            t,
            n: 0,
            rate: 1,
            rng: CounterRng::new(seed),
            entries: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// 1 for the first 2t items, then doubling at 2t, 4t, 8t, ...
    fn rate_for(&self, n: u64) -> u64 {
        if n <= 2 * self.t {
            1
        } else {
            let q = n.div_ceil(self.t);
            q.next_power_of_two() / 2
        }
    }

    /// One halving of the sampling rate: each count loses a geometric number of tails.
    fn diminish(entries: &mut BTreeMap<String, u64>, rng: &mut CounterRng) {
        entries.retain(|_, c| {
            while *c > 0 && rng.unit() < 0.5 {
                *c -= 1;
            }
            *c > 0
        });
    }

    fn resample(entries: &mut BTreeMap<String, u64>, rng: &mut CounterRng, from: u64, to: u64) {
        let mut r = from;
        while r < to {
            Self::diminish(entries, rng);
            r *= 2;
        }
    }

    pub fn add(&mut self, item: &str) {
        self.n += 1;
        let target = self.rate_for(self.n);
        if target > self.rate {
            Self::resample(&mut self.entries, &mut self.rng, self.rate, target);
            self.rate = target;
        }
        if let Some(c) = self.entries.get_mut(item) {
            *c += 1;
        } else if self.rate == 1 || self.rng.unit() < 1.0 / self.rate as f64 {
            self.entries.insert(item.to_string(), 1);
        }
    }

    pub fn frequency(&self, item: &str) -> u64 {
        self.entries.get(item).copied().unwrap_or(0)
    }

    pub fn frequent(&self, support: Option<f64>) -> Result<Vec<ItemCount>> {
        frequent_from(
            self.entries.iter().map(|(k, c)| (k, *c)),
            Some(support.unwrap_or(self.support)),
            self.epsilon,
            self.n,
        )
    }

    /// Brings both sides to the rate of the combined length, then sums counts.
    pub fn merge(&mut self, other: &StickySampling) {
        let target = self.rate_for(self.n + other.n).max(self.rate).max(other.rate);
        let mut rng = self.rng;
        let mut theirs = other.entries.clone();
        Self::resample(&mut self.entries, &mut rng, self.rate, target);
        Self::resample(&mut theirs, &mut rng, other.rate, target);
        for (k, c) in theirs {
            *self.entries.entry(k).or_insert(0) += c;
        }
        self.rng = rng;
        self.rate = target;
        self.n += other.n;
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u64(self.n);
        w.u64(self.rate);
        w.u64(self.rng.counter);
        w.len(self.entries.len());
        for (k, c) in &self.entries {
            w.str(k);
            w.u64(*c);
        }
    }

    pub(crate) fn decode(&self, r: &mut Reader) -> Result<Self> {
        let mut out = self.clone();
        out.n = r.u64()?;
        out.rate = r.u64()?;
        check(out.rate.is_power_of_two(), "sticky rate must be a power of two")?;
        out.rng.counter = r.u64()?;
        for _ in 0..r.len(12)? {
            let k = r.str()?;
            out.entries.insert(k, r.u64()?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_schedule_doubles() {
        let s = StickySampling::from_params(
            &Params::new().with("support", 0.1).with("epsilon", 0.01).with("delta", 0.1),
            1,
        )
        .unwrap();
        let t = s.t;
        assert_eq!(t, 461);
        assert_eq!(s.rate_for(2 * t), 1);
        assert_eq!(s.rate_for(2 * t + 1), 2);
        assert_eq!(s.rate_for(4 * t), 2);
        assert_eq!(s.rate_for(4 * t + 1), 4);
        assert_eq!(s.rate_for(8 * t + 1), 8);
    }

    #[test]
    fn heavy_items_are_reported() {
        let mut s = StickySampling::from_params(
            &Params::new().with("support", 0.1).with("epsilon", 0.01).with("delta", 0.01),
            7,
        )
        .unwrap();
        let mut exact = std::collections::HashMap::new();
        for i in 0..50_000u64 {
            let item = if i % 5 == 0 {
                "hot".to_string()
            } else if i % 7 == 0 {
                "warm".to_string()
            } else {
                format!("cold{}", i % 5000)
            };
            s.add(&item);
            *exact.entry(item).or_insert(0u64) += 1;
        }
        let items: Vec<String> = s.frequent(None).unwrap().into_iter().map(|e| e.item).collect();
        assert!(items.contains(&"hot".to_string()));
        assert!(items.contains(&"warm".to_string()));
        for (k, _) in exact.iter().filter(|(_, c)| (**c as f64) < 0.09 * 50_000.0) {
            assert!(!items.contains(k), "false positive {k}");
        }
    }
}
