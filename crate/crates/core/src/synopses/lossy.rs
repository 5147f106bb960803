//! Lossy counting of frequent items.
//!
//! Payload: `u64 n, u32 entries, {item, u64 count, u64 delta}*` in item order.

use std::collections::BTreeMap;

use crate::codec::{check, Reader, Writer};
use crate::error::{Result, SdeError};
use crate::model::Params;

use super::{ceil_usize, ItemCount};

#[derive(Debug, Clone, PartialEq)]
pub struct LossyCounting {
    epsilon: f64,
    width: u64,
    support: Option<f64>,
    n: u64,
    entries: BTreeMap<String, (u64, u64)>,
}

/// Items whose counts reach `(support - eps) * n`, most frequent first.
pub(crate) fn frequent_from<'a>(
    it: impl Iterator<Item = (&'a String, u64)>,
    support: Option<f64>,
    epsilon: f64,
    n: u64,
) -> Result<Vec<ItemCount>> {
    let s = support.ok_or_else(|| SdeError::param("support", "missing"))?;
    if !(s > epsilon && s <= 1.0) {
        return Err(SdeError::param("support", "must lie in (epsilon, 1]"));
    }
    let cut = (s - epsilon) * n as f64;
    let mut out: Vec<ItemCount> = it
        .filter(|(_, c)| *c as f64 >= cut)
        .map(|(k, c)| ItemCount {
            item: k.clone(),
            count: c,
        })
        .collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.item.cmp(&b.item)));
    Ok(out)
}

impl LossyCounting {
    /// `epsilon`, optional default `support`.
    pub fn from_params(params: &Params) -> Result<Self> {
        let epsilon = params.unit_interval("epsilon")?;
        let support = params.opt_f64("support")?;
        if let Some(s) = support {
            if !(s > epsilon && s <= 1.0) {
                return Err(SdeError::param("support", "must lie in (epsilon, 1]"));
            }
        }
        Ok(LossyCounting {
            epsilon,
            width: ceil_usize(1.0 / epsilon) as u64,
            support,
            n: 0,
            entries: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn bucket(&self) -> u64 {
        self.n.div_ceil(self.width)
    }

    pub fn add(&mut self, item: &str) {
        self.n += 1;
        let b = self.bucket();
        match self.entries.get_mut(item) {
            Some(e) => e.0 += 1,
            None => {
                self.entries.insert(item.to_string(), (1, b - 1));
            }
        }
        if self.n.is_multiple_of(self.width) {
            self.entries.retain(|_, (c, d)| *c + *d > b);
        }
    }

    pub fn frequency(&self, item: &str) -> u64 {
        self.entries.get(item).map(|e| e.0).unwrap_or(0)
    }

    pub fn frequent(&self, support: Option<f64>) -> Result<Vec<ItemCount>> {
        frequent_from(
            self.entries.iter().map(|(k, (c, _))| (k, *c)),
            support.or(self.support),
            self.epsilon,
            self.n,
        )
    }

    /// Sums counts; an item missing on one side may have lost up to that
    /// side's current bucket id, which is added to its delta.
    pub fn merge(&mut self, other: &LossyCounting) {
        let ba = self.bucket();
        let bb = other.bucket();
        let mut merged = BTreeMap::new();
        for (k, &(c, d)) in &self.entries {
            let (oc, od) = other.entries.get(k).copied().unwrap_or((0, bb));
            merged.insert(k.clone(), (c + oc, d + od));
        }
        for (k, &(c, d)) in &other.entries {
            if !self.entries.contains_key(k) {
                merged.insert(k.clone(), (c, d + ba));
            }
        }
        self.n += other.n;
        let b = self.bucket();
        merged.retain(|_, (c, d)| *c + *d > b);
        self.entries = merged;
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u64(self.n);
        w.len(self.entries.len());
        for (k, (c, d)) in &self.entries {
            w.str(k);
            w.u64(*c);
            w.u64(*d);
        }
    }

    pub(crate) fn decode(&self, r: &mut Reader) -> Result<Self> {
        let mut out = self.clone();
        out.n = r.u64()?;
        for _ in 0..r.len(20)? {
            let k = r.str()?;
            let c = r.u64()?;
            let d = r.u64()?;
            out.entries.insert(k, (c, d));
        }
        check(out.entries.values().all(|e| e.0 > 0), "zero lossy count")?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn undercount_bounded_and_no_false_negatives(
            items in proptest::collection::vec(0u32..60, 1..3000)
        ) {
            let eps = 0.01;
            let mut lc = LossyCounting::from_params(&Params::new().with("epsilon", eps)).unwrap();
            let mut exact = std::collections::HashMap::new();
            for i in &items {
                lc.add(&i.to_string());
                *exact.entry(i.to_string()).or_insert(0u64) += 1;
            }
            let n = items.len() as f64;
            for (k, c) in &exact {
                let est = lc.frequency(k);
                prop_assert!(est <= *c);
                prop_assert!((*c - est) as f64 <= eps * n + 1e-9);
            }
            let support = 0.05;
            let reported: Vec<String> = lc.frequent(Some(support)).unwrap().into_iter().map(|e| e.item).collect();
            for (k, c) in &exact {
                if *c as f64 >= support * n {
                    prop_assert!(reported.contains(k));
                }
            }
        }
    }

    #[test]
    fn merged_counts_keep_the_combined_bound() {
        let eps = 0.01;
        let p = Params::new().with("epsilon", eps);
        let mut a = LossyCounting::from_params(&p).unwrap();
        let mut b = LossyCounting::from_params(&p).unwrap();
        let mut exact = std::collections::HashMap::new();
        for i in 0..20_000u32 {
            let item = (i.wrapping_mul(2654435761) % 97 % ((i % 7) + 3)).to_string();
            if i % 3 == 0 { a.add(&item) } else { b.add(&item) }
            *exact.entry(item).or_insert(0u64) += 1;
        }
        a.merge(&b);
        for (k, c) in exact {
            let est = a.frequency(&k);
            assert!(est <= c);
            assert!((c - est) as f64 <= eps * 20_000.0 + 2.0);
        }
    }
}
