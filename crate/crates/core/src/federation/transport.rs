use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::net::TcpStream;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::Duration;

use crossbeam_channel::Sender;

use crate::error::{Result, SdeError};

/// Writes union envelopes to other sites.
pub trait Transport: Send + Sync {
    /// Delivers one line to site `to`; returns the bytes written.
    fn send(&self, to: &str, line: &str) -> Result<u64>;
}

/// In-process union channels for simulated federations.
#[derive(Default)]
pub struct InMemoryNetwork {
    inboxes: RwLock<HashMap<String, Sender<String>>>,
    down: Mutex<HashSet<String>>,
    written: AtomicU64,
}

impl InMemoryNetwork {
    pub fn new() -> InMemoryNetwork {
        InMemoryNetwork::default()
    }

    pub fn attach(&self, site: &str, inbox: Sender<String>) {
        self.inboxes
            .write()
            .expect("network poisoned")
            .insert(site.to_string(), inbox);
    }

    /// Makes `site` unreachable (or reachable again).
    pub fn set_down(&self, site: &str, down: bool) {
        let mut d = self.down.lock().expect("network poisoned");
        if down {
            d.insert(site.to_string());
        } else {
            d.remove(site);
        }
    }

    /// Bytes written on every link so far.
    pub fn bytes_written(&self) -> u64 {
        self.written.load(Ordering::SeqCst)
    }
}

impl Transport for InMemoryNetwork {
    fn send(&self, to: &str, line: &str) -> Result<u64> {
        if self.down.lock().expect("network poisoned").contains(to) {
            return Err(SdeError::Unreachable(to.to_string()));
        }
        let inbox = self
            .inboxes
            .read()
            .expect("network poisoned")
            .get(to)
            .cloned()
            .ok_or_else(|| SdeError::Unreachable(to.to_string()))?;
        inbox
            .send(line.to_string())
            .map_err(|_| SdeError::Unreachable(to.to_string()))?;
        let n = line.len() as u64 + 1;
        self.written.fetch_add(n, Ordering::SeqCst);
        Ok(n)
    }
}

/// NDJSON over TCP to each peer's union listener. Connections are opened
/// lazily and reopened after a failed write.
pub struct TcpTransport {
    peers: BTreeMap<String, String>,
    conns: Mutex<HashMap<String, TcpStream>>,
    backoff: Vec<Duration>,
}

impl TcpTransport {
    pub fn new(peers: BTreeMap<String, String>) -> TcpTransport {
        TcpTransport {
            peers,
            conns: Mutex::new(HashMap::new()),
            backoff: [25, 50, 100, 200].into_iter().map(Duration::from_millis).collect(),
        }
    }

    pub fn with_backoff(mut self, backoff: Vec<Duration>) -> TcpTransport {
        self.backoff = backoff;
        self
    }

    fn try_send(&self, to: &str, addr: &str, payload: &[u8]) -> std::io::Result<()> {
        let mut conns = self.conns.lock().expect("transport poisoned");
        if !conns.contains_key(to) {
            let s = TcpStream::connect(addr)?;
            s.set_nodelay(true)?;
            conns.insert(to.to_string(), s);
        }
        let s = conns.get_mut(to).expect("just inserted");
        let res = s.write_all(payload).and_then(|_| s.flush());
        if res.is_err() {
            conns.remove(to);
        }
        res
    }
}

impl Transport for TcpTransport {
    fn send(&self, to: &str, line: &str) -> Result<u64> {
        let addr = self
            .peers
            .get(to)
            .ok_or_else(|| SdeError::Unreachable(to.to_string()))?;
        let mut payload = Vec::with_capacity(line.len() + 1);
        payload.extend_from_slice(line.as_bytes());
        payload.push(b'\n');
        let mut last = None;
        for delay in std::iter::once(Duration::ZERO).chain(self.backoff.iter().copied()) {
            std::thread::sleep(delay);
            match self.try_send(to, addr, &payload) {
                Ok(()) => return Ok(payload.len() as u64),
                Err(e) => last = Some(e),
            }
        }
        log::warn!("union send to {to} at {addr} failed: {last:?}");
        Err(SdeError::Unreachable(to.to_string()))
    }
}
