//! Sliding-window DFT summaries with grid bucketization.
//!
//! For a window `x_0..x_{n-1}` normalized to zero mean and unit L2 norm, the
//! unitary coefficients `X_F = n^{-1/2} sum_k x_k e^{-i 2 pi k F / n}` satisfy
//! `Corr(x, y) = 1 - d^2(X, Y) / 2` over all coefficients. Only `F = 1..=c`
//! are kept. Since `|X_F| = |X_{n-F}|` for real input, the distance over those
//! `c` coefficients is at most `sqrt(1 - Corr)`, so two windows with
//! correlation at least `T` differ by at most `eps = sqrt(1 - T)` on every
//! axis and fall into the same or adjacent grid cells of width `eps`.
//!
//! Payload: `u32 n, u32 c, u32 streams, {name, u32 len, len f64, c (f64,f64),
//! u64 slides}*, u32 table, {name, u32 c', c' (f64,f64), u8 has_bucket,
//! [u64 bucket], u8 has_reason, [reason]}*`.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;

use crate::codec::{check, Reader, Writer};
use crate::error::{Result, SdeError};
use crate::model::Params;

use super::{EstimateValue, SeriesEntry};

/// Largest magnitude a kept coefficient can have.
pub const COEFF_BOUND: f64 = SQRT_2 / 2.0;

/// Normalized coefficients `F = 1..=c` of a window computed directly.
pub fn dft_coefficients(window: &[f64], c: usize) -> Result<Vec<Complex64>> {
    let n = window.len();
    if n < 2 {
        return Err(SdeError::param("window", "needs at least two values"));
    }
    if c == 0 || c >= n {
        return Err(SdeError::param("coefficients", format!("must lie in [1, {}]", n - 1)));
    }
    let mean = window.iter().sum::<f64>() / n as f64;
    let ss: f64 = window.iter().map(|x| (x - mean) * (x - mean)).sum();
    let sumsq: f64 = window.iter().map(|x| x * x).sum();
    if ss <= 1e-12 * sumsq || ss == 0.0 {
        return Err(SdeError::Degenerate("zero-variance window".into()));
    }
    let scale = 1.0 / ((n as f64).sqrt() * ss.sqrt());
    Ok((1..=c)
        .map(|f| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, x) in window.iter().enumerate() {
                let angle = -2.0 * PI * ((k * f) % n) as f64 / n as f64;
                acc += Complex64::from_polar(x - mean, angle);
            }
            acc * scale
        })
        .collect())
}

/// Uniform grid over the first `coeffs` coefficients, two axes each.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DftGrid {
    pub eps: f64,
    pub coeffs: usize,
    /// Cells per half-range, `ceil(sqrt(2) / (2 eps))`.
    pub half: u32,
}

impl DftGrid {
    pub fn new(eps: f64, coeffs: usize) -> Result<Self> {
        if !(eps > 0.0 && eps < SQRT_2) {
            return Err(SdeError::param("threshold", "grid cell width must lie in (0, sqrt 2)"));
        }
        if coeffs == 0 {
            return Err(SdeError::param("gridCoefficients", "must be at least 1"));
        }
        let half = (SQRT_2 / (2.0 * eps)).ceil() as u32;
        let g = DftGrid { eps, coeffs, half };
        if (g.base() as u64).checked_pow(g.axes() as u32).is_none() {
            return Err(SdeError::param("gridCoefficients", "bucket ids would overflow 64 bits"));
        }
        Ok(g)
    }

    pub fn axes(&self) -> usize {
        2 * self.coeffs
    }

    /// Cells per axis.
    pub fn base(&self) -> u32 {
        2 * self.half
    }

    pub fn bucket_count(&self) -> u64 {
        (self.base() as u64).pow(self.axes() as u32)
    }

    fn cell(&self, v: f64) -> u32 {
        assert!(
            v.abs() <= COEFF_BOUND + 1e-9,
            "coefficient component {v} outside the bounded cube"
        );
        let idx = (v / self.eps).floor() as i64 + self.half as i64;
        idx.clamp(0, self.base() as i64 - 1) as u32
    }

    pub fn cells(&self, coeffs: &[Complex64]) -> Vec<u32> {
        coeffs[..self.coeffs]
            .iter()
            .flat_map(|z| [self.cell(z.re), self.cell(z.im)])
            .collect()
    }

    pub fn bucket(&self, coeffs: &[Complex64]) -> u64 {
        let base = self.base() as u64;
        self.cells(coeffs)
            .iter()
            .fold(0u64, |acc, &c| acc * base + c as u64)
    }

    pub fn decode(&self, bucket: u64) -> Vec<u32> {
        let base = self.base() as u64;
        let mut out = vec![0u32; self.axes()];
        let mut b = bucket;
        for slot in out.iter_mut().rev() {
            *slot = (b % base) as u32;
            b /= base;
        }
        out
    }

    /// Same or neighbouring cell on every axis.
    pub fn adjacent(&self, a: u64, b: u64) -> bool {
        self.decode(a)
            .iter()
            .zip(self.decode(b))
            .all(|(x, y)| x.abs_diff(y) <= 1)
    }

    /// Every bucket id within one cell of `bucket` on every axis, itself included.
    pub fn neighbourhood(&self, bucket: u64) -> Vec<u64> {
        let base = self.base() as i64;
        let mut out = vec![0u64];
        for c in self.decode(bucket) {
            let mut next = Vec::with_capacity(out.len() * 3);
            for prefix in &out {
                for d in -1i64..=1 {
                    let v = c as i64 + d;
                    if (0..base).contains(&v) {
                        next.push(prefix * base as u64 + v as u64);
                    }
                }
            }
            out = next;
        }
        out
    }
}

pub fn dft_bucketize(coeffs: &[Complex64], eps: f64, grid_coeffs: usize) -> Result<u64> {
    if grid_coeffs > coeffs.len() {
        return Err(SdeError::param("gridCoefficients", "exceeds available coefficients"));
    }
    Ok(DftGrid::new(eps, grid_coeffs)?.bucket(coeffs))
}

/// Squared distance over the kept coefficients.
pub fn coefficient_distance2(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
struct DftStream {
    buf: VecDeque<f64>,
    /// Raw sums `sum_k x_k e^{-i 2 pi k F / n}` for F = 1..=c.
    sums: Vec<Complex64>,
    slides: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dft {
    n: usize,
    c: usize,
    threshold: f64,
    grid: DftGrid,
    rot: Vec<Complex64>,
    streams: BTreeMap<String, DftStream>,
    table: BTreeMap<String, SeriesEntry>,
}

impl Dft {
    /// `threshold` T, `coefficients` c, `windowSize` n, optional `gridCoefficients`
    /// (default `min(2, c)`). Requires `2c < n`.
    pub fn from_params(params: &Params) -> Result<Self> {
        let threshold = params.unit_interval("threshold")?;
        let c = params.u64("coefficients")? as usize;
        let n = params.u64("windowSize")? as usize;
        if n < 4 {
            return Err(SdeError::param("windowSize", "must be at least 4"));
        }
        if c == 0 || 2 * c >= n {
            return Err(SdeError::param(
                "coefficients",
                format!("must lie in [1, {}] for a window of {n}", (n - 1) / 2),
            ));
        }
        let g = params.opt_u64("gridCoefficients")?.unwrap_or(2.min(c as u64)) as usize;
        if g > c {
            return Err(SdeError::param("gridCoefficients", "must not exceed coefficients"));
        }
        let grid = DftGrid::new((1.0 - threshold).sqrt(), g)?;
        let rot = (1..=c)
            .map(|f| Complex64::from_polar(1.0, 2.0 * PI * f as f64 / n as f64))
            .collect();
        Ok(Dft {
            n,
            c,
            threshold,
            grid,
            rot,
            streams: BTreeMap::new(),
            table: BTreeMap::new(),
        })
    }

    pub fn eps(&self) -> f64 {
        self.grid.eps
    }

    pub fn grid(&self) -> DftGrid {
        self.grid
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn window_size(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty() && self.table.is_empty()
    }

    pub fn stream_count(&self) -> usize {
        self.streams.len() + self.table.len()
    }

    pub fn window(&self, stream: &str) -> Option<Vec<f64>> {
        self.streams.get(stream).map(|s| s.buf.iter().copied().collect())
    }

    fn twiddle(&self, k: usize, f: usize) -> Complex64 {
        Complex64::from_polar(1.0, -2.0 * PI * ((k * f) % self.n) as f64 / self.n as f64)
    }

    fn resync(&self, s: &mut DftStream) {
        for f in 1..=self.c {
            s.sums[f - 1] = s
                .buf
                .iter()
                .enumerate()
                .map(|(k, &x)| x * self.twiddle(k, f))
                .sum();
        }
    }

    pub fn add(&mut self, stream: &str, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(SdeError::Record("value is not finite".into()));
        }
        if self.table.contains_key(stream) {
            return Err(SdeError::Record(format!(
                "stream `{stream}` only has a shipped coefficient table"
            )));
        }
        let mut s = self.streams.remove(stream).unwrap_or_else(|| DftStream {
            buf: VecDeque::with_capacity(self.n),
            sums: vec![Complex64::new(0.0, 0.0); self.c],
            slides: 0,
        });
        if s.buf.len() < self.n {
            let k = s.buf.len();
            for f in 1..=self.c {
                s.sums[f - 1] += x * self.twiddle(k, f);
            }
            s.buf.push_back(x);
        } else {
            let old = s.buf.pop_front().unwrap();
            s.buf.push_back(x);
            for f in 0..self.c {
                s.sums[f] = self.rot[f] * (s.sums[f] - old + x);
            }
            s.slides += 1;
            if s.slides.is_multiple_of(self.n as u64) {
                self.resync(&mut s);
            }
        }
        self.streams.insert(stream.to_string(), s);
        Ok(())
    }

    fn entry(&self, name: &str, s: &DftStream) -> SeriesEntry {
        let mut e = SeriesEntry {
            stream: name.to_string(),
            coefficients: Vec::new(),
            signature: Vec::new(),
            bucket: None,
            degenerate: None,
        };
        if s.buf.len() < self.n {
            e.degenerate = Some(format!("window not full ({} of {})", s.buf.len(), self.n));
            return e;
        }
        let n = self.n as f64;
        let mean = s.buf.iter().sum::<f64>() / n;
        let ss: f64 = s.buf.iter().map(|x| (x - mean) * (x - mean)).sum();
        let sumsq: f64 = s.buf.iter().map(|x| x * x).sum();
        if ss <= 1e-12 * sumsq || ss == 0.0 {
            e.degenerate = Some("zero-variance window".into());
            return e;
        }
        let scale = 1.0 / (n.sqrt() * ss.sqrt());
        let coeffs: Vec<Complex64> = s.sums.iter().map(|z| z * scale).collect();
        e.bucket = Some(self.grid.bucket(&coeffs));
        e.coefficients = coeffs.iter().map(|z| [z.re, z.im]).collect();
        e
    }

    fn single(e: &SeriesEntry) -> EstimateValue {
        match (&e.degenerate, e.bucket) {
            (Some(reason), _) => EstimateValue::Degenerate(reason.clone()),
            (None, Some(bucket)) => EstimateValue::Bucketed {
                value: Box::new(EstimateValue::Coefficients(e.coefficients.clone())),
                bucket,
            },
            (None, None) => EstimateValue::Coefficients(e.coefficients.clone()),
        }
    }

    pub fn series(&self, stream: Option<&str>) -> EstimateValue {
        match stream {
            Some(name) => {
                if let Some(s) = self.streams.get(name) {
                    Self::single(&self.entry(name, s))
                } else if let Some(e) = self.table.get(name) {
                    Self::single(e)
                } else {
                    EstimateValue::Empty
                }
            }
            None => {
                let mut all: Vec<SeriesEntry> = self
                    .streams
                    .iter()
                    .map(|(k, s)| self.entry(k, s))
                    .chain(self.table.values().cloned())
                    .collect();
                all.sort_by(|a, b| a.stream.cmp(&b.stream));
                EstimateValue::Series(all)
            }
        }
    }

    /// Replaces every window by its current coefficient entry.
    pub fn tabulate(&mut self) {
        let streams = std::mem::take(&mut self.streams);
        for (k, s) in streams {
            let e = self.entry(&k, &s);
            self.table.insert(k, e);
        }
    }

    /// Union of per-stream states; a stream present on both sides is an error.
    pub fn merge(&mut self, other: &Dft) -> Result<()> {
        for k in other.streams.keys().chain(other.table.keys()) {
            if self.streams.contains_key(k) || self.table.contains_key(k) {
                return Err(SdeError::Merge {
                    left: format!("DFT state holding stream `{k}`"),
                    right: format!("DFT state also holding stream `{k}`"),
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
        w.u32(self.c as u32);
        w.len(self.streams.len());
        for (k, s) in &self.streams {
            w.str(k);
            w.len(s.buf.len());
            for x in &s.buf {
                w.f64(*x);
            }
            for z in &s.sums {
                w.f64(z.re);
                w.f64(z.im);
            }
            w.u64(s.slides);
        }
        w.len(self.table.len());
        for (k, e) in &self.table {
            w.str(k);
            w.len(e.coefficients.len());
            for z in &e.coefficients {
                w.f64(z[0]);
                w.f64(z[1]);
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
        check(r.u32()? as usize == self.n, "dft window mismatch")?;
        check(r.u32()? as usize == self.c, "dft coefficient count mismatch")?;
        let mut out = self.clone();
        out.streams.clear();
        out.table.clear();
        for _ in 0..r.len(4)? {
            let name = r.str()?;
            let len = r.len(8)?;
            check(len <= self.n, "dft buffer longer than window")?;
            let buf = (0..len).map(|_| r.f64()).collect::<Result<VecDeque<_>>>()?;
            let sums = (0..self.c)
                .map(|_| Ok(Complex64::new(r.f64()?, r.f64()?)))
                .collect::<Result<Vec<_>>>()?;
            let slides = r.u64()?;
            out.streams.insert(name, DftStream { buf, sums, slides });
        }
        for _ in 0..r.len(4)? {
            let name = r.str()?;
            let cn = r.len(16)?;
            let coefficients = (0..cn)
                .map(|_| Ok([r.f64()?, r.f64()?]))
                .collect::<Result<Vec<_>>>()?;
            let bucket = if r.u8()? == 1 { Some(r.u64()?) } else { None };
            let degenerate = if r.u8()? == 1 { Some(r.str()?) } else { None };
            out.table.insert(
                name.clone(),
                SeriesEntry {
                    stream: name,
                    coefficients,
                    signature: Vec::new(),
                    bucket,
                    degenerate,
                },
            );
        }
        Ok(out)
    }
}
