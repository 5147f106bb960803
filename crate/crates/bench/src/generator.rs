//! Seeded Level 1 / Level 2 tick generator.
//!
//! Every stream trades on a fixed schedule (`1 / rate` apart, random phase),
//! so record counts depend only on the config. Each trade is followed by a
//! Poisson number of Level 2 bids at the same timestamp. Prices follow a
//! sector factor walk plus an idiosyncratic walk.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use sde_core::{Result, Scalar, SdeError, StreamRecord};
use serde::{Deserialize, Serialize};

pub const LEVEL1: &str = "L1";
pub const LEVEL2: &str = "L2";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub dataset: String,
    pub n_streams: usize,
    /// Index of the first stream id, so several generators can cover disjoint streams.
    #[serde(default)]
    pub first_stream: usize,
    pub start_ms: u64,
    pub duration_ms: u64,
    /// Mean Level 1 trades per second per stream.
    pub level1_rate: f64,
    /// Mean Level 2 bids following each trade.
    pub bids_per_trade: f64,
    /// Stream `i` trades at a rate proportional to `1 / (i + 1)^skew`.
    pub skew: f64,
    pub sectors: usize,
    /// Per-second volatility of the sector factor and of each stream's own walk.
    pub sector_vol: f64,
    pub idio_vol: f64,
    pub mean_volume: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            dataset: "ticks".into(),
            n_streams: 50,
            first_stream: 0,
            start_ms: 0,
            duration_ms: 300_000,
            level1_rate: 1.0,
            bids_per_trade: 2.0,
            skew: 0.0,
            sectors: 4,
            sector_vol: 0.004,
            idio_vol: 0.002,
            mean_volume: 200.0,
            seed: 7,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_streams == 0 {
            return Err(SdeError::Config("n_streams must be positive".into()));
        }
        if self.sectors == 0 {
            return Err(SdeError::Config("sectors must be positive".into()));
        }
        if !(self.level1_rate > 0.0 && self.level1_rate.is_finite()) {
            return Err(SdeError::Config("level1_rate must be positive".into()));
        }
        if !(self.bids_per_trade >= 0.0 && self.bids_per_trade.is_finite()) {
            return Err(SdeError::Config("bids_per_trade must be non-negative".into()));
        }
        if !(self.skew >= 0.0 && self.skew.is_finite()) {
            return Err(SdeError::Config("skew must be non-negative".into()));
        }
        Ok(())
    }

    /// Trades per second of each stream.
    pub fn rates(&self) -> Vec<f64> {
        let w: Vec<f64> = (0..self.n_streams)
            .map(|i| 1.0 / ((i + 1) as f64).powf(self.skew))
            .collect();
        let total: f64 = w.iter().sum();
        w.iter()
            .map(|x| self.level1_rate * self.n_streams as f64 * x / total)
            .collect()
    }
}

pub fn stream_id(i: usize) -> String {
    format!("S{i:04}")
}

pub fn sector_of(i: usize, sectors: usize) -> usize {
    i % sectors
}

struct StreamGen {
    period_ms: f64,
    next: u64,
    trades: u64,
    phase: f64,
    base: f64,
    beta: f64,
    idio: f64,
    last_ms: u64,
}

pub struct Generator {
    cfg: GeneratorConfig,
    rng: ChaCha8Rng,
    streams: Vec<StreamGen>,
    ids: Vec<String>,
    heap: BinaryHeap<Reverse<(u64, usize)>>,
    /// Sector factor value per elapsed second.
    factors: Vec<Vec<f64>>,
    volume: LogNormal<f64>,
    bids: Option<Poisson<f64>>,
    pending: Vec<StreamRecord>,
    end: u64,
}

impl Generator {
    pub fn new(cfg: GeneratorConfig) -> Result<Generator> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let secs = (cfg.duration_ms / 1000 + 2) as usize;
        let step = Normal::new(0.0, cfg.sector_vol).map_err(|e| SdeError::Config(e.to_string()))?;
        let factors = (0..cfg.sectors)
            .map(|_| {
                let mut f = 0.0;
                (0..secs)
                    .map(|_| {
                        f += step.sample(&mut rng);
                        f
                    })
                    .collect()
            })
            .collect();
        let end = cfg.start_ms + cfg.duration_ms;
        let mut heap = BinaryHeap::new();
        let streams: Vec<StreamGen> = cfg
            .rates()
            .into_iter()
            .enumerate()
            .map(|(i, rate)| {
                let period_ms = 1000.0 / rate;
                let phase = rng.random::<f64>() * period_ms;
                let next = cfg.start_ms + phase as u64;
                if next < end {
                    heap.push(Reverse((next, i)));
                }
                StreamGen {
                    period_ms,
                    next,
                    trades: 0,
                    phase,
                    base: rng.random_range(20.0..400.0f64).ln(),
                    beta: rng.random_range(0.6..1.4),
                    idio: 0.0,
                    last_ms: cfg.start_ms,
                }
            })
            .collect();
        let sigma = 0.8;
        let volume = LogNormal::new(cfg.mean_volume.max(1.0).ln() - sigma * sigma / 2.0, sigma)
            .map_err(|e| SdeError::Config(e.to_string()))?;
        let bids = if cfg.bids_per_trade > 0.0 {
            Some(Poisson::new(cfg.bids_per_trade).map_err(|e| SdeError::Config(e.to_string()))?)
        } else {
            None
        };
        let ids = (0..cfg.n_streams).map(|i| stream_id(cfg.first_stream + i)).collect();
        Ok(Generator {
            cfg,
            rng,
            streams,
            ids,
            heap,
            factors,
            volume,
            bids,
            pending: Vec::new(),
            end,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    fn trade(&mut self, t: u64, i: usize) {
        let sector = sector_of(self.cfg.first_stream + i, self.cfg.sectors);
        let s = &mut self.streams[i];
        let dt = (t - s.last_ms) as f64 / 1000.0;
        s.last_ms = t;
        let idio = Normal::new(0.0, self.cfg.idio_vol * dt.max(1e-3).sqrt()).unwrap();
        s.idio += idio.sample(&mut self.rng);
        let sec = ((t - self.cfg.start_ms) / 1000) as usize;
        let f = self.factors[sector][sec.min(self.factors[sector].len() - 1)];
        let price = round_cents((s.base + s.beta * f + s.idio).exp());
        let vol = self.volume.sample(&mut self.rng).round().max(1.0);
        let id = &self.ids[i];
        let n_bids = self.bids.map(|p| p.sample(&mut self.rng) as u64).unwrap_or(0);
        // Bids go out after the trade, so push them first onto the pop stack.
        for _ in 0..n_bids {
            let bid = round_cents(price * (1.0 - self.rng.random_range(0.0..0.002)));
            let bvol = self.volume.sample(&mut self.rng).round().max(1.0);
            self.pending.push(StreamRecord::new(
                self.cfg.dataset.clone(),
                id.clone(),
                t,
                vec![Scalar::Num(bid), Scalar::Num(bvol), Scalar::from(LEVEL2)],
            ));
        }
        self.pending.push(StreamRecord::new(
            self.cfg.dataset.clone(),
            id.clone(),
            t,
            vec![Scalar::Num(price), Scalar::Num(vol), Scalar::from(LEVEL1)],
        ));
        let s = &mut self.streams[i];
        s.trades += 1;
        s.next = self.cfg.start_ms + (s.phase + s.trades as f64 * s.period_ms) as u64;
        if s.next < self.end {
            self.heap.push(Reverse((s.next, i)));
        }
    }
}

fn round_cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl Iterator for Generator {
    type Item = StreamRecord;

    fn next(&mut self) -> Option<StreamRecord> {
        if let Some(r) = self.pending.pop() {
            return Some(r);
        }
        let Reverse((t, i)) = self.heap.pop()?;
        self.trade(t, i);
        self.pending.pop()
    }
}

pub fn generate(cfg: GeneratorConfig) -> Result<Generator> {
    Generator::new(cfg)
}

/// Level tag of a generated record.
pub fn level(rec: &StreamRecord) -> Option<&str> {
    match rec.values.get(2) {
        Some(Scalar::Text(s)) => Some(s.as_str()),
        _ => None,
    }
}
