//! Split → Filter → Count(bids) → Join-on-trade, shared by both workflows.
//!
//! Records are split by stream, Level 1 trades set the price and Level 2 bids
//! are counted. When event time crosses a tick boundary every stream that has
//! traded at least once emits one joined tuple; silent streams carry their
//! last price forward with zero bids.

use std::collections::VecDeque;

use sde_core::{Scalar, StreamRecord};

use crate::generator::{level, LEVEL1, LEVEL2};

pub const TICK_MS: u64 = 5_000;
/// Five minutes of five-second ticks.
pub const WINDOW_TICKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JoinedTick {
    pub stream: usize,
    pub tick: u64,
    pub price: f64,
    pub bids: u64,
    /// Log return against the previous tick, zero on the first.
    pub ret: f64,
}

#[derive(Debug, Clone, Default)]
struct Slot {
    price: Option<f64>,
    prev_close: Option<f64>,
    bids: u64,
}

pub struct TickJoiner {
    tick_ms: u64,
    start_ms: u64,
    current: u64,
    slots: Vec<Slot>,
}

/// Index encoded in a generated stream id (`S0042` → 42).
pub fn stream_index(id: &str) -> Option<usize> {
    id.strip_prefix('S')?.parse().ok()
}

impl TickJoiner {
    pub fn new(n_streams: usize, start_ms: u64, tick_ms: u64) -> TickJoiner {
        TickJoiner {
            tick_ms: tick_ms.max(1),
            start_ms,
            current: 0,
            slots: vec![Slot::default(); n_streams],
        }
    }

    pub fn current_tick(&self) -> u64 {
        self.current
    }

    /// Absorbs one record and appends the tuples of every tick it closes.
    pub fn push(&mut self, rec: &StreamRecord, out: &mut Vec<Vec<JoinedTick>>) {
        let tick = rec.event_time.saturating_sub(self.start_ms) / self.tick_ms;
        while self.current < tick {
            out.push(self.close());
        }
        let Some(i) = stream_index(&rec.stream_id).filter(|i| *i < self.slots.len()) else {
            return;
        };
        match level(rec) {
            Some(LEVEL1) => {
                if let Some(Scalar::Num(p)) = rec.values.first() {
                    self.slots[i].price = Some(*p);
                }
            }
            Some(LEVEL2) => self.slots[i].bids += 1,
            _ => {}
        }
    }

    /// Closes the current tick.
    pub fn close(&mut self) -> Vec<JoinedTick> {
        let tick = self.current;
        self.current += 1;
        let mut out = Vec::new();
        for (i, s) in self.slots.iter_mut().enumerate() {
            let Some(p) = s.price else {
                s.bids = 0;
                continue;
            };
            let ret = s.prev_close.map(|q| (p / q).ln()).unwrap_or(0.0);
            out.push(JoinedTick {
                stream: i,
                tick,
                price: p,
                bids: s.bids,
                ret,
            });
            s.prev_close = Some(p);
            s.bids = 0;
        }
        out
    }
}

/// Runs the joiner over a whole record sequence, closing the final tick.
pub fn join_all(records: &[StreamRecord], n_streams: usize, start_ms: u64, tick_ms: u64) -> Vec<Vec<JoinedTick>> {
    let mut j = TickJoiner::new(n_streams, start_ms, tick_ms);
    let mut out = Vec::new();
    for r in records {
        j.push(r, &mut out);
    }
    out.push(j.close());
    out
}

/// Last `len` values of each stream.
#[derive(Debug, Clone)]
pub struct Rings {
    len: usize,
    rings: Vec<VecDeque<f64>>,
}

impl Rings {
    pub fn new(n: usize, len: usize) -> Rings {
        Rings {
            len,
            rings: vec![VecDeque::with_capacity(len); n],
        }
    }

    pub fn push(&mut self, stream: usize, x: f64) {
        let r = &mut self.rings[stream];
        if r.len() == self.len {
            r.pop_front();
        }
        r.push_back(x);
    }

    /// Full windows with non-zero variance, the same test the DFT synopsis
    /// applies before it assigns a bucket.
    pub fn usable(&self) -> Vec<(usize, Vec<f64>)> {
        self.rings
            .iter()
            .enumerate()
            .filter(|(_, r)| r.len() == self.len)
            .map(|(i, r)| (i, r.iter().copied().collect::<Vec<f64>>()))
            .filter(|(_, w)| !degenerate(w))
            .collect()
    }

    pub fn window(&self, stream: usize) -> Vec<f64> {
        self.rings[stream].iter().copied().collect()
    }
}

pub fn degenerate(w: &[f64]) -> bool {
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let ss: f64 = w.iter().map(|x| (x - mean) * (x - mean)).sum();
    let sumsq: f64 = w.iter().map(|x| x * x).sum();
    ss <= 1e-12 * sumsq || ss == 0.0
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    sab / (saa.sqrt() * sbb.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(stream: &str, t: u64, price: f64, lvl: &str) -> StreamRecord {
        StreamRecord::new("ticks", stream, t, vec![Scalar::Num(price), Scalar::Num(1.0), Scalar::from(lvl)])
    }

    #[test]
    fn joins_prices_and_counts_bids() {
        let recs = vec![
            rec("S0000", 10, 5.0, "L1"),
            rec("S0000", 10, 4.9, "L2"),
            rec("S0000", 20, 4.9, "L2"),
            rec("S0001", 6000, 7.0, "L1"),
            rec("S0000", 12000, 5.5, "L1"),
        ];
        let ticks = join_all(&recs, 2, 0, 5000);
        assert_eq!(ticks.len(), 3);
        assert_eq!(ticks[0], vec![JoinedTick { stream: 0, tick: 0, price: 5.0, bids: 2, ret: 0.0 }]);
        assert_eq!(ticks[1].len(), 2);
        assert_eq!(ticks[1][0].price, 5.0);
        assert_eq!(ticks[1][0].bids, 0);
        assert_eq!(ticks[1][1].price, 7.0);
        assert!((ticks[2][0].ret - (5.5f64 / 5.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn ring_keeps_last_values() {
        let mut r = Rings::new(2, 3);
        for x in 0..5 {
            r.push(0, x as f64);
        }
        r.push(1, 1.0);
        assert_eq!(r.window(0), vec![2.0, 3.0, 4.0]);
        assert_eq!(r.usable().len(), 1);
        for _ in 0..3 {
            r.push(1, 2.0);
        }
        assert_eq!(r.usable().len(), 1);
    }

    #[test]
    fn pearson_of_affine_copy_is_one() {
        let a = [1.0, 3.0, 2.0, 5.0];
        let b: Vec<f64> = a.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((pearson(&a, &b) - 1.0).abs() < 1e-12);
        let c: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((pearson(&a, &c) + 1.0).abs() < 1e-12);
    }
}
