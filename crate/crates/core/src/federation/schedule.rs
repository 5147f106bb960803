use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use crossbeam_channel::{Receiver, TryRecvError};

use super::FederatedSite;
use crate::error::Result;
use crate::protocol::{Request, Response};
use crate::synopses::Query;

/// Manually advanced milliseconds.
#[derive(Debug, Default)]
pub struct SimClock {
    now: AtomicU64,
}

impl SimClock {
    pub fn new(start_ms: u64) -> SimClock {
        SimClock {
            now: AtomicU64::new(start_ms),
        }
    }

    pub fn now(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }

    pub fn advance(&self, ms: u64) -> u64 {
        self.now.fetch_add(ms, Ordering::SeqCst) + ms
    }
}

/// Fires a federated query on the responsible site every `period`. A round
/// that comes due while the previous one is still waiting for frames is
/// skipped.
pub struct PeriodicScheduler {
    site: FederatedSite,
    synopsis: String,
    query: Query,
    period_ms: u64,
    next_due: u64,
    inflight: Option<Receiver<Response>>,
    rounds: u64,
    coalesced: u64,
    results: Vec<Response>,
}

impl PeriodicScheduler {
    pub fn new(site: FederatedSite, synopsis: &str, query: Query, period: Duration, start_ms: u64) -> Self {
        let period_ms = period.as_millis().max(1) as u64;
        PeriodicScheduler {
            site,
            synopsis: synopsis.to_string(),
            query,
            period_ms,
            next_due: start_ms + period_ms,
            inflight: None,
            rounds: 0,
            coalesced: 0,
            results: Vec::new(),
        }
    }

    fn poll(&mut self) -> bool {
        let Some(rx) = &self.inflight else {
            return true;
        };
        match rx.try_recv() {
            Ok(r) => {
                self.results.push(r);
                self.inflight = None;
                true
            }
            Err(TryRecvError::Empty) => false,
            Err(TryRecvError::Disconnected) => {
                self.inflight = None;
                true
            }
        }
    }

    /// Starts every round due at `now_ms`. Returns how many started.
    pub fn tick(&mut self, now_ms: u64) -> Result<u64> {
        let mut started = 0;
        while self.next_due <= now_ms {
            self.next_due += self.period_ms;
            if !self.poll() {
                self.coalesced += 1;
                continue;
            }
            let rid = format!("{}-round-{}", self.synopsis, self.rounds);
            let req = Request::query(rid, &self.synopsis, self.query.clone());
            self.inflight = self.site.start_round(req)?;
            self.rounds += 1;
            started += 1;
        }
        Ok(started)
    }

    /// Blocks until the round in flight answers or `limit` passes.
    pub fn wait(&mut self, limit: Duration) -> Option<&Response> {
        if let Some(rx) = self.inflight.take() {
            match rx.recv_timeout(limit) {
                Ok(r) => self.results.push(r),
                Err(_) => return None,
            }
        }
        self.results.last()
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn coalesced(&self) -> u64 {
        self.coalesced
    }

    pub fn results(&self) -> &[Response] {
        &self.results
    }
}
