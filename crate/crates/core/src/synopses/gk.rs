//! Greenwald-Khanna epsilon-approximate quantile summary.
//!
//! Tuples `(v, g, delta)`: `g` is the gap in minimum rank to the previous
//! tuple and `delta` the spread between minimum and maximum rank.
//!
//! Payload: `u64 n, f64 epsilon, u32 tuples, {f64 v, u64 g, u64 delta}*`.

use crate::codec::{check, Reader, Writer};
use crate::error::Result;
use crate::model::Params;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Tuple {
    v: f64,
    g: u64,
    delta: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gk {
    epsilon: f64,
    n: u64,
    tuples: Vec<Tuple>,
}

impl Gk {
    pub fn from_params(params: &Params) -> Result<Self> {
        Ok(Gk {
            epsilon: params.unit_interval("epsilon")?,
            n: 0,
            tuples: Vec::new(),
        })
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn summary_size(&self) -> usize {
        self.tuples.len()
    }

    fn cap(&self) -> u64 {
        (2.0 * self.epsilon * self.n as f64).floor() as u64
    }

    fn period(&self) -> u64 {
        ((1.0 / (2.0 * self.epsilon)).floor() as u64).max(1)
    }

    pub fn insert(&mut self, v: f64) {
        let pos = self.tuples.partition_point(|t| t.v <= v);
        // The successor's rank spread bounds the new tuple's uncertainty.
        let delta = if pos == 0 || pos == self.tuples.len() {
            0
        } else {
            let s = self.tuples[pos];
            s.g + s.delta - 1
        };
        self.tuples.insert(pos, Tuple { v, g: 1, delta });
        self.n += 1;
        if self.n.is_multiple_of(self.period()) {
            self.compress();
        }
    }

    /// Folds each tuple into its successor while `g + g' + delta' <= 2 eps n`.
    /// The first tuple always stays so the minimum is exact.
    fn compress(&mut self) {
        if self.tuples.len() < 3 {
            return;
        }
        let cap = self.cap();
        let mut out: Vec<Tuple> = Vec::with_capacity(self.tuples.len());
        let mut cur = *self.tuples.last().unwrap();
        for t in self.tuples[1..self.tuples.len() - 1].iter().rev() {
            if t.g + cur.g + cur.delta <= cap {
                cur.g += t.g;
            } else {
                out.push(cur);
                cur = *t;
            }
        }
        out.push(cur);
        out.push(self.tuples[0]);
        out.reverse();
        self.tuples = out;
    }

    /// Value whose rank is within `eps n` of `ceil(phi n)`.
    pub fn quantile(&self, phi: f64) -> Option<f64> {
        if self.n == 0 {
            return None;
        }
        let r = ((phi * self.n as f64).ceil() as u64).clamp(1, self.n) as f64;
        let bound = self.epsilon * self.n as f64;
        let mut rmin = 0u64;
        for t in &self.tuples {
            rmin += t.g;
            let rmax = rmin + t.delta;
            if r - rmin as f64 <= bound && rmax as f64 - r <= bound {
                return Some(t.v);
            }
        }
        self.tuples.last().map(|t| t.v)
    }

    /// Rank bounds of every tuple as `(v, rmin, rmax)`.
    fn ranks(&self) -> Vec<(f64, u64, u64)> {
        let mut rmin = 0;
        self.tuples
            .iter()
            .map(|t| {
                rmin += t.g;
                (t.v, rmin, rmin + t.delta)
            })
            .collect()
    }

    /// Combines rank bounds from both summaries; the result answers with
    /// error at most `max(eps_a, eps_b)` of the combined count.
    pub fn merge(&mut self, other: &Gk) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            let eps = self.epsilon.max(other.epsilon);
            *self = other.clone();
            self.epsilon = eps;
            return;
        }
        let a = self.ranks();
        let b = other.ranks();
        let mut merged: Vec<(f64, u64, u64)> = Vec::with_capacity(a.len() + b.len());
        // Ties put `a` first: for an `a` tuple the `b` predecessor is strictly
        // smaller, for a `b` tuple the `a` predecessor may be equal.
        let bound = |own: &[(f64, u64, u64)], other: &[(f64, u64, u64)], n_other: u64, strict: bool| {
            own.iter()
                .map(|&(v, lo, hi)| {
                    let p = if strict {
                        other.partition_point(|o| o.0 < v)
                    } else {
                        other.partition_point(|o| o.0 <= v)
                    };
                    let pred_min = if p == 0 { 0 } else { other[p - 1].1 };
                    let succ_max = if p == other.len() {
                        n_other
                    } else {
                        other[p].2 - 1
                    };
                    (v, lo + pred_min, hi + succ_max)
                })
                .collect::<Vec<_>>()
        };
        let ea = bound(&a, &b, other.n, true);
        let eb = bound(&b, &a, self.n, false);
        let (mut i, mut j) = (0, 0);
        while i < ea.len() || j < eb.len() {
            if j == eb.len() || (i < ea.len() && ea[i].0 <= eb[j].0) {
                merged.push(ea[i]);
                i += 1;
            } else {
                merged.push(eb[j]);
                j += 1;
            }
        }
        let mut prev = 0u64;
        self.tuples = merged
            .into_iter()
            .map(|(v, lo, hi)| {
                let lo = lo.max(prev);
                let t = Tuple {
                    v,
                    g: lo - prev,
                    delta: hi.saturating_sub(lo),
                };
                prev = lo;
                t
            })
            .collect();
        self.n += other.n;
        self.epsilon = self.epsilon.max(other.epsilon);
        self.compress();
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u64(self.n);
        w.f64(self.epsilon);
        w.len(self.tuples.len());
        for t in &self.tuples {
            w.f64(t.v);
            w.u64(t.g);
            w.u64(t.delta);
        }
    }

    pub(crate) fn decode(&self, r: &mut Reader) -> Result<Self> {
        let mut out = self.clone();
        out.n = r.u64()?;
        out.epsilon = r.f64()?;
        check(out.epsilon > 0.0 && out.epsilon < 1.0, "gk epsilon out of range")?;
        out.tuples = (0..r.len(24)?)
            .map(|_| {
                Ok(Tuple {
                    v: r.f64()?,
                    g: r.u64()?,
                    delta: r.u64()?,
                })
            })
            .collect::<Result<_>>()?;
        check(
            out.tuples.iter().map(|t| t.g).sum::<u64>() == out.n,
            "gk gaps do not sum to n",
        )?;
        Ok(out)
    }
}
