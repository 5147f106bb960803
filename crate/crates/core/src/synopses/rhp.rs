//! Random hyperplane projection signatures over per-stream tuple windows.
//!
//! Payload: `u32 n, u32 bits, u32 streams, {name, u32 len, len f64}*,
//! u32 table, {name, u32 words, words u64, u8 has_bucket, [u64], u8 has_reason, [reason]}*`.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::codec::{check, Reader, Writer};
use crate::error::{Result, SdeError};
use crate::model::Params;

use super::{EstimateValue, SeriesEntry};

fn hyperplanes(bits: usize, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..bits * dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect()
}

fn sign_bits(v: &[f64], planes: &[f64], bits: usize) -> Vec<u64> {
    let dim = v.len();
    let mut words = vec![0u64; bits.div_ceil(64)];
    for i in 0..bits {
        let h = &planes[i * dim..(i + 1) * dim];
        let dot: f64 = v.iter().zip(h).map(|(a, b)| a * b).sum();
        if dot >= 0.0 {
            words[i / 64] |= 1 << (i % 64);
        }
    }
    words
}

/// `bits`-bit signature of `window` against Gaussian hyperplanes drawn from `seed`.
pub fn rhp_signature(window: &[f64], bits: usize, seed: u64) -> Result<Vec<u64>> {
    if bits == 0 {
        return Err(SdeError::param("bitmapSize", "must be at least 1"));
    }
    if window.iter().all(|&x| x == 0.0) {
        return Err(SdeError::Degenerate("zero vector".into()));
    }
    Ok(sign_bits(window, &hyperplanes(bits, window.len(), seed), bits))
}

pub fn hamming(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// `cos(pi * hamming / bits)`.
pub fn signature_similarity(a: &[u64], b: &[u64], bits: usize) -> f64 {
    (PI * hamming(a, b) as f64 / bits as f64).cos()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rhp {
    n: usize,
    bits: usize,
    buckets: u64,
    planes: Arc<Vec<f64>>,
    streams: BTreeMap<String, VecDeque<f64>>,
    table: BTreeMap<String, SeriesEntry>,
}

impl Rhp {
    /// `bitmapSize` b, `windowSize` n, optional `buckets` (default 256).
    pub fn from_params(params: &Params, seed: u64) -> Result<Self> {
        let bits = params.u64("bitmapSize")? as usize;
        if !(1..=4096).contains(&bits) {
            return Err(SdeError::param("bitmapSize", "must lie in [1, 4096]"));
        }
        let n = params.u64("windowSize")? as usize;
        if n < 2 {
            return Err(SdeError::param("windowSize", "must be at least 2"));
        }
        if bits * n > 1 << 24 {
            return Err(SdeError::param("bitmapSize", "too many hyperplane entries"));
        }
        let buckets = params.opt_u64("buckets")?.unwrap_or(256);
        if buckets == 0 {
            return Err(SdeError::param("buckets", "must be positive"));
        }
        if let Some(t) = params.opt_f64("threshold")? {
            if !(-1.0..=1.0).contains(&t) {
                return Err(SdeError::param("threshold", "must lie in [-1, 1]"));
            }
        }
        Ok(Rhp {
            n,
            bits,
            buckets,
            planes: Arc::new(hyperplanes(bits, n, seed)),
            streams: BTreeMap::new(),
            table: BTreeMap::new(),
        })
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty() && self.table.is_empty()
    }

    pub fn add(&mut self, stream: &str, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(SdeError::Record("value is not finite".into()));
        }
        if self.table.contains_key(stream) {
            return Err(SdeError::Record(format!(
                "stream `{stream}` only has a shipped signature"
            )));
        }
        let buf = self.streams.entry(stream.to_string()).or_default();
        if buf.len() == self.n {
            buf.pop_front();
        }
        buf.push_back(x);
        Ok(())
    }

    /// Bucket from the leading `ceil(log2 buckets)` signature bits.
    fn bucket(&self, words: &[u64]) -> u64 {
        let prefix = (64 - (self.buckets - 1).leading_zeros()).min(self.bits as u32);
        let mut v = 0u64;
        for i in 0..prefix as usize {
            v = (v << 1) | ((words[i / 64] >> (i % 64)) & 1);
        }
        v % self.buckets
    }

    fn entry(&self, name: &str, buf: &VecDeque<f64>) -> SeriesEntry {
        let mut e = SeriesEntry {
            stream: name.to_string(),
            coefficients: Vec::new(),
            signature: Vec::new(),
            bucket: None,
            degenerate: None,
        };
        if buf.len() < self.n {
            e.degenerate = Some(format!("window not full ({} of {})", buf.len(), self.n));
            return e;
        }
        let mean = buf.iter().sum::<f64>() / self.n as f64;
        let centred: Vec<f64> = buf.iter().map(|x| x - mean).collect();
        if centred.iter().all(|&x| x.abs() <= 1e-12 * mean.abs().max(1.0)) {
            e.degenerate = Some("zero-variance window".into());
            return e;
        }
        let words = sign_bits(&centred, &self.planes, self.bits);
        e.bucket = Some(self.bucket(&words));
        e.signature = words;
        e
    }

    fn lookup(&self, name: &str) -> Option<SeriesEntry> {
        self.streams
            .get(name)
            .map(|b| self.entry(name, b))
            .or_else(|| self.table.get(name).cloned())
    }

    fn single(&self, e: SeriesEntry) -> EstimateValue {
        match (e.degenerate, e.bucket) {
            (Some(reason), _) => EstimateValue::Degenerate(reason),
            (None, bucket) => EstimateValue::Bucketed {
                value: Box::new(EstimateValue::Signature {
                    bits: self.bits as u32,
                    words: e.signature,
                }),
                bucket: bucket.unwrap_or(0),
            },
        }
    }

    pub fn series(&self, stream: Option<&str>) -> EstimateValue {
        match stream {
            Some(name) => match self.lookup(name) {
                Some(e) => self.single(e),
                None => EstimateValue::Empty,
            },
            None => {
                let mut all: Vec<SeriesEntry> = self
                    .streams
                    .iter()
                    .map(|(k, b)| self.entry(k, b))
                    .chain(self.table.values().cloned())
                    .collect();
                all.sort_by(|a, b| a.stream.cmp(&b.stream));
                EstimateValue::Series(all)
            }
        }
    }

    pub fn similarity(&self, a: &str, b: &str) -> Result<EstimateValue> {
        let (Some(ea), Some(eb)) = (self.lookup(a), self.lookup(b)) else {
            return Ok(EstimateValue::Empty);
        };
        if let Some(r) = ea.degenerate.or(eb.degenerate) {
            return Ok(EstimateValue::Degenerate(r));
        }
        Ok(EstimateValue::Scalar(signature_similarity(
            &ea.signature,
            &eb.signature,
            self.bits,
        )))
    }

    pub fn tabulate(&mut self) {
        let streams = std::mem::take(&mut self.streams);
        for (k, b) in streams {
            let e = self.entry(&k, &b);
            self.table.insert(k, e);
        }
    }

    pub fn merge(&mut self, other: &Rhp) -> Result<()> {
        for k in other.streams.keys().chain(other.table.keys()) {
            if self.streams.contains_key(k) || self.table.contains_key(k) {
                return Err(SdeError::Merge {
                    left: format!("RHP state holding stream `{k}`"),
                    right: format!("RHP state also holding stream `{k}`"),
                });
            }
        }
        self.streams
            .extend(other.streams.iter().map(|(k, v)| (k.clone(), v.clone())));
        self.table
            .extend(other.table.iter().map(|(k, v)| (k.clone(), v.clone())));
        Ok(())
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u32(self.n as u32);
        w.u32(self.bits as u32);
        w.len(self.streams.len());
        for (k, b) in &self.streams {
            w.str(k);
            w.len(b.len());
            for x in b {
                w.f64(*x);
            }
        }
        w.len(self.table.len());
        for (k, e) in &self.table {
            w.str(k);
            w.len(e.signature.len());
            for x in &e.signature {
                w.u64(*x);
            }
            match e.bucket {
                Some(b) => {
                    w.u8(1);
                    w.u64(b);
                }
                None => w.u8(0),
            }
            match &e.degenerate {
                Some(r) => {
                    w.u8(1);
                    w.str(r);
                }
                None => w.u8(0),
            }
        }
    }

    pub(crate) fn decode(&self, r: &mut Reader) -> Result<Self> {
        check(r.u32()? as usize == self.n, "rhp window mismatch")?;
        check(r.u32()? as usize == self.bits, "rhp bit count mismatch")?;
        let mut out = self.clone();
        out.streams.clear();
        out.table.clear();
        for _ in 0..r.len(4)? {
            let name = r.str()?;
            let len = r.len(8)?;
            check(len <= self.n, "rhp buffer longer than window")?;
            let buf = (0..len).map(|_| r.f64()).collect::<Result<VecDeque<_>>>()?;
            out.streams.insert(name, buf);
        }
        for _ in 0..r.len(4)? {
            let name = r.str()?;
            let wn = r.len(8)?;
            let signature = (0..wn).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
            let bucket = if r.u8()? == 1 { Some(r.u64()?) } else { None };
            let degenerate = if r.u8()? == 1 { Some(r.str()?) } else { None };
            out.table.insert(
                name.clone(),
                SeriesEntry {
                    stream: name,
                    coefficients: Vec::new(),
                    signature,
                    bucket,
                    degenerate,
                },
            );
        }
        Ok(out)
    }
}
