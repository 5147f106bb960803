//! Uniform sampling: chain sampling over a tuple window, reservoir sampling
//! without one.
//!
//! Payload: `u64 i, u64 rng_counter, u8 windowed`, then either
//! `u32 k', k' scalar` (reservoir) or `k * {u64 successor, u32 len, len * (u64 idx, scalar)}`.

use std::collections::VecDeque;

use crate::codec::{check, Reader, Writer};
use crate::error::{Result, SdeError};
use crate::hash::CounterRng;
use crate::model::{Params, Scalar};

#[derive(Debug, Clone, PartialEq)]
struct Chain {
    links: VecDeque<(u64, Scalar)>,
    successor: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSampler {
    k: usize,
    window: Option<u64>,
    i: u64,
    rng: CounterRng,
    reservoir: Vec<Scalar>,
    chains: Vec<Chain>,
}

pub(crate) fn write_scalar(w: &mut Writer, s: &Scalar) {
    match s {
        Scalar::Num(v) => {
            w.u8(0);
            w.f64(*v);
        }
        Scalar::Text(t) => {
            w.u8(1);
            w.str(t);
        }
    }
}

pub(crate) fn read_scalar(r: &mut Reader) -> Result<Scalar> {
    match r.u8()? {
        0 => Ok(Scalar::Num(r.f64()?)),
        1 => Ok(Scalar::Text(r.str()?)),
        t => Err(SdeError::Codec(format!("bad scalar tag {t}"))),
    }
}

impl ChainSampler {
    /// `sampleSize` k and optional `windowSize` in tuples.
    pub fn from_params(params: &Params, seed: u64) -> Result<Self> {
        let k = params.u64("sampleSize")? as usize;
        if !(1..=100_000).contains(&k) {
            return Err(SdeError::param("sampleSize", "must lie in [1, 100000]"));
        }
        let window = params.opt_u64("windowSize")?;
        if window == Some(0) {
            return Err(SdeError::param("windowSize", "must be positive"));
        }
        Ok(ChainSampler {
            k,
            window,
            i: 0,
            rng: CounterRng::new(seed),
            reservoir: Vec::new(),
            chains: if window.is_some() {
                (0..k)
                    .map(|_| Chain {
                        links: VecDeque::new(),
                        successor: 0,
                    })
                    .collect()
            } else {
                Vec::new()
            },
        })
    }

    pub fn add(&mut self, e: Scalar) {
        self.i += 1;
        let i = self.i;
        let Some(n) = self.window else {
            if self.reservoir.len() < self.k {
                self.reservoir.push(e);
            } else {
                let j = self.rng.one_to(i) as usize;
                if j <= self.k {
                    self.reservoir[j - 1] = e;
                }
            }
            return;
        };
        let span = i.min(n);
        for c in self.chains.iter_mut() {
            if self.rng.one_to(span) == 1 {
                c.links.clear();
                c.links.push_back((i, e.clone()));
                c.successor = i + self.rng.one_to(n);
            } else if c.successor == i {
                c.links.push_back((i, e.clone()));
                c.successor = i + self.rng.one_to(n);
            }
            while c.links.front().is_some_and(|(idx, _)| idx + n <= i) {
                c.links.pop_front();
            }
        }
    }

    /// With a window: one element per chain (with replacement). Without: the reservoir.
    pub fn sample(&self) -> Vec<Scalar> {
        if self.window.is_none() {
            return self.reservoir.clone();
        }
        self.chains
            .iter()
            .filter_map(|c| c.links.front().map(|(_, e)| e.clone()))
            .collect()
    }

    /// Weighted subsampling: each slot keeps the left or right candidate with
    /// probability proportional to the number of elements it represents.
    pub fn merge(&mut self, other: &ChainSampler) {
        match self.window {
            None => {
                let (na, nb) = (self.i, other.i);
                let mut a = std::mem::take(&mut self.reservoir);
                let mut b = other.reservoir.clone();
                let mut out = Vec::with_capacity(self.k);
                while out.len() < self.k && !(a.is_empty() && b.is_empty()) {
                    let take_a = if a.is_empty() {
                        false
                    } else if b.is_empty() {
                        true
                    } else {
                        self.rng.unit() < na as f64 / (na + nb) as f64
                    };
                    let side = if take_a { &mut a } else { &mut b };
                    let j = (self.rng.one_to(side.len() as u64) - 1) as usize;
                    out.push(side.swap_remove(j));
                }
                self.reservoir = out;
                self.i = na + nb;
            }
            Some(n) => {
                let wa = self.i.min(n) as f64;
                let wb = other.i.min(n) as f64;
                for (c, oc) in self.chains.iter_mut().zip(&other.chains) {
                    if self.rng.unit() < wb / (wa + wb) {
                        *c = oc.clone();
                    }
                }
                self.i = self.i.max(other.i);
            }
        }
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u64(self.i);
        w.u64(self.rng.counter);
        match self.window {
            None => {
                w.u8(0);
                w.len(self.reservoir.len());
                for e in &self.reservoir {
                    write_scalar(w, e);
                }
            }
            Some(_) => {
                w.u8(1);
                for c in &self.chains {
                    w.u64(c.successor);
                    w.len(c.links.len());
                    for (idx, e) in &c.links {
                        w.u64(*idx);
                        write_scalar(w, e);
                    }
                }
            }
        }
    }

    pub(crate) fn decode(&self, r: &mut Reader) -> Result<Self> {
        let mut out = self.clone();
        out.i = r.u64()?;
        out.rng.counter = r.u64()?;
        let windowed = r.u8()? == 1;
        check(windowed == self.window.is_some(), "chain sampler window mismatch")?;
        if windowed {
            for c in out.chains.iter_mut() {
                c.successor = r.u64()?;
                c.links.clear();
                for _ in 0..r.len(9)? {
                    let idx = r.u64()?;
                    c.links.push_back((idx, read_scalar(r)?));
                }
            }
        } else {
            let n = r.len(1)?;
            check(n <= self.k, "reservoir larger than sample size")?;
            out.reservoir = (0..n).map(|_| read_scalar(r)).collect::<Result<_>>()?;
        }
        Ok(out)
    }
}
